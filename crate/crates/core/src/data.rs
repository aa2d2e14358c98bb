//! Summary-statistics data model shared by every estimator.
//!
//! A [`SummaryDataset`] holds, for each of `J` variants, the outcome
//! association and its standard error, the `K` exposure associations and the
//! `K x K` covariance of those exposure associations. Variants are aligned by
//! position. Construction only checks shapes; [`validate`] reports on the
//! statistical invariants without mutating anything.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{wald_p_value, Z_975};

/// Relative tolerance used for symmetry checks.
const SYMMETRY_TOL: f64 = 1e-12;
/// PSD check: smallest eigenvalue must be at least `-PSD_TOL * trace`.
const PSD_TOL: f64 = 1e-10;
/// Rank check: smallest singular value must exceed `RANK_TOL * largest`.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryDataset {
    variant_ids: Vec<String>,
    beta_y: DVector<f64>,
    se_y: DVector<f64>,
    beta_x: DMatrix<f64>,
    sigma_x: Vec<DMatrix<f64>>,
    trait_correlation: Option<DMatrix<f64>>,
}

impl SummaryDataset {
    /// Builds a dataset from fully specified exposure covariance matrices.
    pub fn new(
        variant_ids: Vec<String>,
        beta_y: DVector<f64>,
        se_y: DVector<f64>,
        beta_x: DMatrix<f64>,
        sigma_x: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let j = beta_x.nrows();
        let k = beta_x.ncols();
        if variant_ids.len() != j || beta_y.len() != j || se_y.len() != j || sigma_x.len() != j {
            return Err(Error::DimensionMismatch(format!(
                "expected {j} variants: ids={}, beta_y={}, se_y={}, sigma_x={}",
                variant_ids.len(),
                beta_y.len(),
                se_y.len(),
                sigma_x.len()
            )));
        }
        if let Some(idx) = sigma_x.iter().position(|s| s.nrows() != k || s.ncols() != k) {
            return Err(Error::DimensionMismatch(format!(
                "sigma_x[{idx}] is {}x{}, expected {k}x{k}",
                sigma_x[idx].nrows(),
                sigma_x[idx].ncols()
            )));
        }
        Ok(Self {
            variant_ids,
            beta_y,
            se_y,
            beta_x,
            sigma_x,
            trait_correlation: None,
        })
    }

    /// Builds a dataset whose exposure covariances are diagonal, taken from
    /// per-exposure standard errors (`se_x` is `J x K`).
    pub fn from_standard_errors(
        variant_ids: Vec<String>,
        beta_y: DVector<f64>,
        se_y: DVector<f64>,
        beta_x: DMatrix<f64>,
        se_x: &DMatrix<f64>,
    ) -> Result<Self> {
        if se_x.shape() != beta_x.shape() {
            return Err(Error::DimensionMismatch(format!(
                "se_x is {:?}, beta_x is {:?}",
                se_x.shape(),
                beta_x.shape()
            )));
        }
        let sigma_x = se_x
            .row_iter()
            .map(|row| DMatrix::from_diagonal(&row.transpose().map(|s| s * s)))
            .collect();
        Self::new(variant_ids, beta_y, se_y, beta_x, sigma_x)
    }

    /// Number of variants `J`.
    pub fn n_variants(&self) -> usize {
        self.beta_x.nrows()
    }

    /// Number of exposures `K`.
    pub fn n_exposures(&self) -> usize {
        self.beta_x.ncols()
    }

    pub fn variant_ids(&self) -> &[String] {
        &self.variant_ids
    }

    pub fn beta_y(&self) -> &DVector<f64> {
        &self.beta_y
    }

    pub fn se_y(&self) -> &DVector<f64> {
        &self.se_y
    }

    pub fn beta_x(&self) -> &DMatrix<f64> {
        &self.beta_x
    }

    pub fn sigma_x(&self) -> &[DMatrix<f64>] {
        &self.sigma_x
    }

    pub fn trait_correlation(&self) -> Option<&DMatrix<f64>> {
        self.trait_correlation.as_ref()
    }

    /// Inverse-variance weights `1 / se_y^2`.
    pub fn weights(&self) -> DVector<f64> {
        self.se_y.map(|s| 1.0 / (s * s))
    }

    /// Standard errors of the exposure associations (square roots of the
    /// `sigma_x` diagonals), `J x K`.
    pub fn se_x(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_variants(), self.n_exposures(), |j, k| {
            self.sigma_x[j][(k, k)].max(0.0).sqrt()
        })
    }

    /// Copy restricted to the given variant rows and exposure columns, in the
    /// order supplied. Any trait correlation is restricted accordingly.
    pub fn subset(&self, variants: &[usize], exposures: &[usize]) -> Result<Self> {
        let j = self.n_variants();
        let k = self.n_exposures();
        if let Some(&bad) = variants.iter().find(|&&v| v >= j) {
            return Err(Error::DimensionMismatch(format!("variant index {bad} >= {j}")));
        }
        if let Some(&bad) = exposures.iter().find(|&&e| e >= k) {
            return Err(Error::ExposureIndex { index: bad, k });
        }
        let ids = variants.iter().map(|&v| self.variant_ids[v].clone()).collect();
        let beta_y = DVector::from_iterator(variants.len(), variants.iter().map(|&v| self.beta_y[v]));
        let se_y = DVector::from_iterator(variants.len(), variants.iter().map(|&v| self.se_y[v]));
        let beta_x = DMatrix::from_fn(variants.len(), exposures.len(), |r, c| {
            self.beta_x[(variants[r], exposures[c])]
        });
        let sigma_x = variants
            .iter()
            .map(|&v| {
                DMatrix::from_fn(exposures.len(), exposures.len(), |a, b| {
                    self.sigma_x[v][(exposures[a], exposures[b])]
                })
            })
            .collect();
        let mut out = Self::new(ids, beta_y, se_y, beta_x, sigma_x)?;
        out.trait_correlation = self.trait_correlation.as_ref().map(|c| {
            DMatrix::from_fn(exposures.len(), exposures.len(), |a, b| c[(exposures[a], exposures[b])])
        });
        Ok(out)
    }

    /// Copy with every `sigma_x` off-diagonal entry set to zero and any trait
    /// correlation dropped.
    pub fn diagonal_only(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.sigma_x {
            *s = DMatrix::from_diagonal(&s.diagonal());
        }
        out.trait_correlation = None;
        out
    }

    /// Copy with a different exposure-association matrix. Used by scale and
    /// permutation checks.
    pub fn with_beta_x(&self, beta_x: DMatrix<f64>) -> Result<Self> {
        if beta_x.shape() != self.beta_x.shape() {
            return Err(Error::DimensionMismatch(format!(
                "beta_x {:?} vs {:?}",
                beta_x.shape(),
                self.beta_x.shape()
            )));
        }
        let mut out = self.clone();
        out.beta_x = beta_x;
        Ok(out)
    }

    /// Copy with different exposure covariance matrices.
    pub fn with_sigma_x(&self, sigma_x: Vec<DMatrix<f64>>) -> Result<Self> {
        let mut out = Self::new(
            self.variant_ids.clone(),
            self.beta_y.clone(),
            self.se_y.clone(),
            self.beta_x.clone(),
            sigma_x,
        )?;
        out.trait_correlation = self.trait_correlation.clone();
        Ok(out)
    }
}

/// Estimation method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "IVW")]
    Ivw,
    #[serde(rename = "IVW_UNIVARIABLE")]
    IvwUnivariable,
    #[serde(rename = "MLE")]
    Mle,
    #[serde(rename = "MLE_COR")]
    MleCor,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ivw => "IVW",
            Method::IvwUnivariable => "IVW_UNIVARIABLE",
            Method::Mle => "MLE",
            Method::MleCor => "MLE_COR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Point estimate of the causal effect vector with its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalEstimate {
    pub theta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    /// Profile log-likelihood for MLE fits, weighted RSS for IVW fits.
    pub final_objective: f64,
}

impl CausalEstimate {
    pub fn n_exposures(&self) -> usize {
        self.theta.len()
    }

    pub fn se(&self, k: usize) -> f64 {
        self.covariance[(k, k)].max(0.0).sqrt()
    }

    /// Normal-theory 95% confidence interval for coefficient `k`.
    pub fn ci95(&self, k: usize) -> (f64, f64) {
        let half = Z_975 * self.se(k);
        (self.theta[k] - half, self.theta[k] + half)
    }

    /// Two-sided Wald p-value for `theta_k = 0`.
    pub fn p_value(&self, k: usize) -> f64 {
        wald_p_value(self.theta[k], self.se(k))
    }
}

/// Invariants checked by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Invariant {
    VariantCount,
    FiniteValues,
    SeYPositive,
    SigmaXDiagonal,
    SigmaXSymmetric,
    SigmaXPsd,
    BetaXFullRank,
    TraitCorrelation,
}

impl Invariant {
    pub fn name(self) -> &'static str {
        match self {
            Invariant::VariantCount => "J > K >= 1",
            Invariant::FiniteValues => "all values finite",
            Invariant::SeYPositive => "se_y strictly positive",
            Invariant::SigmaXDiagonal => "sigma_x diagonal non-negative",
            Invariant::SigmaXSymmetric => "sigma_x symmetric",
            Invariant::SigmaXPsd => "sigma_x positive semi-definite",
            Invariant::BetaXFullRank => "beta_x full column rank",
            Invariant::TraitCorrelation => "trait_correlation valid",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub invariant: Invariant,
    pub passed: bool,
    /// Offending variant indices, where the invariant is per-variant.
    pub indices: Vec<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, invariant: Invariant) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.invariant == invariant)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "ok" } else { "FAIL" };
            write!(f, "{status}: {}", c.invariant)?;
            if !c.indices.is_empty() {
                write!(f, " (variants {:?})", c.indices)?;
            }
            if !c.detail.is_empty() {
                write!(f, " - {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn check(invariant: Invariant, indices: Vec<usize>, detail: String) -> CheckResult {
    CheckResult {
        invariant,
        passed: indices.is_empty() && detail.is_empty(),
        indices,
        detail,
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|a| (a + 1..n).all(|b| (m[(a, b)] - m[(b, a)]).abs() <= SYMMETRY_TOL * scale))
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    let trace = m.trace();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    min >= -PSD_TOL * trace.abs()
}

/// Checks the correlation-matrix contract: square `k x k`, symmetric, exact
/// unit diagonal, entries in `[-1, 1]`.
pub fn check_correlation_matrix(corr: &DMatrix<f64>, k: usize) -> Result<()> {
    if corr.nrows() != k || corr.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "correlation matrix is {}x{}, expected {k}x{k}",
            corr.nrows(),
            corr.ncols()
        )));
    }
    if corr.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCorrelation("non-finite entry".into()));
    }
    if let Some(i) = (0..k).find(|&i| corr[(i, i)] != 1.0) {
        return Err(Error::InvalidCorrelation(format!(
            "diagonal entry {i} is {}, expected 1",
            corr[(i, i)]
        )));
    }
    if let Some(x) = corr.iter().find(|x| x.abs() > 1.0) {
        return Err(Error::InvalidCorrelation(format!("entry {x} outside [-1, 1]")));
    }
    if !is_symmetric(corr) {
        return Err(Error::InvalidCorrelation("matrix is not symmetric".into()));
    }
    Ok(())
}

/// Reports on every dataset invariant. Never mutates and never fails.
pub fn validate(dataset: &SummaryDataset) -> ValidationReport {
    let j = dataset.n_variants();
    let k = dataset.n_exposures();
    let mut checks = Vec::new();

    let count_detail = if k >= 1 && j > k {
        String::new()
    } else {
        format!("J = {j}, K = {k}")
    };
    checks.push(check(Invariant::VariantCount, vec![], count_detail));

    let non_finite: Vec<usize> = (0..j)
        .filter(|&v| {
            !dataset.beta_y[v].is_finite()
                || !dataset.se_y[v].is_finite()
                || dataset.beta_x.row(v).iter().any(|x| !x.is_finite())
                || dataset.sigma_x[v].iter().any(|x| !x.is_finite())
        })
        .collect();
    checks.push(check(Invariant::FiniteValues, non_finite, String::new()));

    let bad_se: Vec<usize> = (0..j).filter(|&v| !(dataset.se_y[v] > 0.0)).collect();
    checks.push(check(Invariant::SeYPositive, bad_se, String::new()));

    let bad_diag: Vec<usize> = (0..j)
        .filter(|&v| dataset.sigma_x[v].diagonal().iter().any(|d| !(*d >= 0.0)))
        .collect();
    checks.push(check(Invariant::SigmaXDiagonal, bad_diag, String::new()));

    let asym: Vec<usize> = (0..j).filter(|&v| !is_symmetric(&dataset.sigma_x[v])).collect();
    checks.push(check(Invariant::SigmaXSymmetric, asym, String::new()));

    let not_psd: Vec<usize> = (0..j)
        .filter(|&v| {
            let s = &dataset.sigma_x[v];
            s.iter().all(|x| x.is_finite()) && !is_psd(s)
        })
        .collect();
    checks.push(check(Invariant::SigmaXPsd, not_psd, String::new()));

    let rank_detail = if j == 0 || k == 0 || dataset.beta_x.iter().any(|x| !x.is_finite()) {
        "beta_x empty or non-finite".to_string()
    } else {
        let sv = dataset.beta_x.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if k > j || !(min > RANK_TOL * max) {
            format!("smallest/largest singular value ratio {:.3e}", if max > 0.0 { min / max } else { 0.0 })
        } else {
            String::new()
        }
    };
    checks.push(check(Invariant::BetaXFullRank, vec![], rank_detail));

    let corr_detail = match &dataset.trait_correlation {
        None => String::new(),
        Some(c) => match check_correlation_matrix(c, k) {
            Ok(()) => String::new(),
            Err(e) => e.to_string(),
        },
    };
    checks.push(check(Invariant::TraitCorrelation, vec![], corr_detail));

    ValidationReport { checks }
}

/// Fills `sigma_x` off-diagonals as `corr_kl * sqrt(S_kk) * sqrt(S_ll)`,
/// keeping the diagonals. The correlation is stored on the returned copy.
pub fn apply_trait_correlation(dataset: &SummaryDataset, corr: &DMatrix<f64>) -> Result<SummaryDataset> {
    let k = dataset.n_exposures();
    check_correlation_matrix(corr, k)?;
    let sigma_x = dataset
        .sigma_x
        .iter()
        .map(|s| {
            let sd: Vec<f64> = (0..k).map(|a| s[(a, a)].max(0.0).sqrt()).collect();
            DMatrix::from_fn(k, k, |a, b| if a == b { s[(a, a)] } else { corr[(a, b)] * sd[a] * sd[b] })
        })
        .collect();
    let mut out = dataset.with_sigma_x(sigma_x)?;
    out.trait_correlation = Some(corr.clone());
    Ok(out)
}
