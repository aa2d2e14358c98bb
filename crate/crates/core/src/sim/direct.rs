//! Summary-level generator for large numbers of variants.
//!
//! With independent variants, the simple-regression estimates from a sample
//! of `n` individuals are asymptotically normal around the marginal
//! associations, with covariance `Cov(residuals) / (n h_j)` where
//! `h_j = 2 p_j (1 - p_j)`. Drawing them directly costs `O(J)` per
//! replication instead of `O(n J)`, which makes several thousand
//! replications at `J = 1000` feasible. The marginal associations and the
//! residual moments follow from the population moments of the
//! individual-level model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::assoc::SimulatedSummary;
use super::dgp::{draw_variant_params, VariantParams};
use super::rng::{replication_rng, StreamRole};
use super::scenario::{Outcome, ScenarioSpec};
use crate::data::SummaryDataset;
use crate::error::{Error, Result};

/// Population second moments of `(X1*, X2*, Y)` for fixed variant effects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationMoments {
    /// Covariance matrix of `(X1*, X2*, Y)`.
    pub cov: [[f64; 3]; 3],
}

/// Marginal associations of `(X1, X2, Y)` with each variant.
pub fn marginal_associations(spec: &ScenarioSpec, params: &VariantParams) -> Vec<[f64; 3]> {
    let s_rho = (1.0 - spec.rho * spec.rho).sqrt();
    let [t1, t2] = spec.theta;
    (0..params.maf.len())
        .map(|v| {
            let b1 = params.beta[0][v];
            let b2 = spec.rho * b1 + s_rho * params.beta[1][v];
            [b1, b2, t1 * b1 + t2 * b2]
        })
        .collect()
}

pub fn population_moments(spec: &ScenarioSpec, params: &VariantParams) -> PopulationMoments {
    let gamma = spec.gamma;
    let rho = spec.rho;
    let s_rho = (1.0 - rho * rho).sqrt();
    let [t1, t2] = spec.theta;
    let mut a11 = 0.0;
    let mut a22 = 0.0;
    let mut a12 = 0.0;
    for (v, &p) in params.maf.iter().enumerate() {
        let h = 2.0 * p * (1.0 - p);
        a11 += h * params.beta[0][v] * params.beta[0][v];
        a22 += h * params.beta[1][v] * params.beta[1][v];
        a12 += h * params.beta[0][v] * params.beta[1][v];
    }
    // X1 = A1 + gamma U + e1 scaled; W = A2 + gamma U + e2 scaled.
    let v1 = a11 + 1.0;
    let vw = a22 + 1.0;
    let c1w = a12 + gamma * gamma;
    let v2 = rho * rho * v1 + s_rho * s_rho * vw + 2.0 * rho * s_rho * c1w;
    let c12 = rho * v1 + s_rho * c1w;
    let cu = [gamma, rho * gamma + s_rho * gamma];
    let cy1 = t1 * v1 + t2 * c12 + cu[0];
    let cy2 = t1 * c12 + t2 * v2 + cu[1];
    let vy = t1 * t1 * v1 + t2 * t2 * v2 + 2.0 * t1 * t2 * c12 + 2.0 * (t1 * cu[0] + t2 * cu[1]) + 2.0;
    let [s1, s2] = spec.sigma_zeta_sq;
    PopulationMoments {
        cov: [[v1 + s1, c12, cy1], [c12, v2 + s2, cy2], [cy1, cy2, vy]],
    }
}

/// Draws one replication's summary statistics directly from the asymptotic
/// distribution of the per-variant regression estimates. Uses the same
/// variant parameters as the individual-level generator for the same
/// replication index.
pub fn simulate_summary_direct(spec: &ScenarioSpec, index: usize) -> Result<SimulatedSummary> {
    spec.validate()?;
    if !matches!(spec.outcome, Outcome::Continuous) {
        return Err(Error::InvalidScenario("summary-level generator supports continuous outcomes only".into()));
    }
    let rep = index as u64;
    let params = draw_variant_params(spec, &mut replication_rng(spec.seed, rep, StreamRole::Parameters));
    let moments = population_moments(spec, &params);
    let marg = marginal_associations(spec, &params);
    let mut rx = replication_rng(spec.seed, rep, StreamRole::ExposureSample);
    let mut ry = replication_rng(spec.seed, rep, StreamRole::OutcomeSample);
    let j = spec.n_variants;
    let n = spec.n as f64;
    let c = moments.cov;
    let mut beta_x = DMatrix::zeros(j, 2);
    let mut se_x = DMatrix::zeros(j, 2);
    let mut beta_y = DVector::zeros(j);
    let mut se_y = DVector::zeros(j);
    for v in 0..j {
        let p = params.maf[v];
        let nh = n * 2.0 * p * (1.0 - p);
        let b = marg[v];
        let h = nh / n;
        let r11 = (c[0][0] - b[0] * b[0] * h) / nh;
        let r22 = (c[1][1] - b[1] * b[1] * h) / nh;
        let r12 = (c[0][1] - b[0] * b[1] * h) / nh;
        let ryy = (c[2][2] - b[2] * b[2] * h) / nh;
        let z1: f64 = rx.sample(StandardNormal);
        let z2: f64 = rx.sample(StandardNormal);
        let zy: f64 = ry.sample(StandardNormal);
        let l11 = r11.sqrt();
        let l21 = r12 / l11;
        let l22 = (r22 - l21 * l21).max(0.0).sqrt();
        beta_x[(v, 0)] = b[0] + l11 * z1;
        beta_x[(v, 1)] = b[1] + l21 * z1 + l22 * z2;
        se_x[(v, 0)] = l11;
        se_x[(v, 1)] = r22.sqrt();
        beta_y[v] = b[2] + ryy.sqrt() * zy;
        se_y[v] = ryy.sqrt();
    }
    let ids = (0..j).map(|v| format!("v{}", v + 1)).collect();
    let dataset = SummaryDataset::from_standard_errors(ids, beta_y, se_y, beta_x, &se_x)?;
    Ok(SimulatedSummary {
        dataset,
        trait_correlation: c[0][1] / (c[0][0] * c[1][1]).sqrt(),
        prevalence: None,
    })
}
