//! Per-variant association estimates from individual-level samples.
//!
//! Exposures (and continuous outcomes) use simple linear regression on each
//! genotype; binary outcomes use logistic regression fitted by Newton
//! iterations. Genotypes take three values, so both fits only need
//! per-genotype sufficient statistics.

use nalgebra::{DMatrix, DVector};

use super::dgp::IndividualSample;
use super::scenario::{Outcome, ScenarioSpec};
use crate::data::{apply_trait_correlation, SummaryDataset};
use crate::error::{Error, Result};

const LOGISTIC_MAX_ITER: usize = 25;
const LOGISTIC_SCORE_TOL: f64 = 1e-10;

/// Slope and standard error of a simple regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub beta: f64,
    pub se: f64,
}

/// Summary statistics of one simulated replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSummary {
    /// Dataset with diagonal exposure covariances.
    pub dataset: SummaryDataset,
    /// Correlation of the measured exposures in the exposure sample.
    pub trait_correlation: f64,
    /// Case proportion in the outcome sample, for binary outcomes.
    pub prevalence: Option<f64>,
}

impl SimulatedSummary {
    /// Dataset with off-diagonals filled from the sample trait correlation.
    pub fn with_correlation(&self) -> Result<SummaryDataset> {
        let r = self.trait_correlation;
        apply_trait_correlation(&self.dataset, &DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]))
    }
}

/// Per-genotype sums `(count, sum g, sum g^2)` shared by every response.
struct GenotypeMoments {
    n: f64,
    sum_g: Vec<f64>,
    sum_g2: Vec<f64>,
}

impl GenotypeMoments {
    fn new(sample: &IndividualSample) -> Self {
        let j = sample.n_variants;
        let mut sum_g = vec![0.0; j];
        let mut sum_g2 = vec![0.0; j];
        for i in 0..sample.n {
            for (v, &g) in sample.genotype_row(i).iter().enumerate() {
                if g > 0 {
                    let gf = g as f64;
                    sum_g[v] += gf;
                    sum_g2[v] += gf * gf;
                }
            }
        }
        Self {
            n: sample.n as f64,
            sum_g,
            sum_g2,
        }
    }

    fn sxx(&self, v: usize) -> f64 {
        self.sum_g2[v] - self.sum_g[v] * self.sum_g[v] / self.n
    }
}

/// Simple linear regressions of several responses on each genotype.
fn linear_associations(sample: &IndividualSample, gm: &GenotypeMoments, responses: &[&[f64]]) -> Result<Vec<Vec<Association>>> {
    let j = sample.n_variants;
    let r = responses.len();
    let mut sum_gy = vec![0.0; j * r];
    for i in 0..sample.n {
        for (v, &g) in sample.genotype_row(i).iter().enumerate() {
            if g > 0 {
                let gf = g as f64;
                for (c, resp) in responses.iter().enumerate() {
                    sum_gy[v * r + c] += gf * resp[i];
                }
            }
        }
    }
    let n = gm.n;
    let mut out = Vec::with_capacity(r);
    for (c, resp) in responses.iter().enumerate() {
        let sum_y: f64 = resp.iter().sum();
        let mean_y = sum_y / n;
        let syy: f64 = resp.iter().map(|y| (y - mean_y).powi(2)).sum();
        let mut col = Vec::with_capacity(j);
        for v in 0..j {
            let sxx = gm.sxx(v);
            if !(sxx > 0.0) {
                return Err(Error::MonomorphicVariant(v));
            }
            let sxy = sum_gy[v * r + c] - gm.sum_g[v] * mean_y;
            let beta = sxy / sxx;
            let rss = (syy - beta * sxy).max(0.0);
            let se = (rss / (n - 2.0) / sxx).sqrt();
            col.push(Association { beta, se });
        }
        out.push(col);
    }
    Ok(out)
}

/// Simple linear regression of `y` on a single genotype vector.
pub fn linear_regression(g: &[u8], y: &[f64]) -> Result<Association> {
    let sample = IndividualSample {
        n: g.len(),
        n_variants: 1,
        genotypes: g.to_vec(),
        x: [vec![], vec![]],
        x_star: [vec![], vec![]],
        y: vec![],
        clamped: 0,
    };
    let gm = GenotypeMoments::new(&sample);
    Ok(linear_associations(&sample, &gm, &[y])?.remove(0).remove(0))
}

/// Logistic regression `logit P(y = 1) = a + b g` from per-genotype counts
/// and case counts. Returns the slope and its standard error.
pub fn logistic_grouped(counts: [f64; 3], cases: [f64; 3], variant: usize) -> Result<Association> {
    let fail = |reason: &str| Error::Logistic {
        variant,
        reason: reason.to_string(),
    };
    let n: f64 = counts.iter().sum();
    let total_cases: f64 = cases.iter().sum();
    if !(total_cases > 0.0 && total_cases < n) {
        return Err(fail("outcome has no variation"));
    }
    let occupied = counts.iter().filter(|&&c| c > 0.0).count();
    if occupied < 2 {
        return Err(Error::MonomorphicVariant(variant));
    }
    let prev = total_cases / n;
    let mut a = (prev / (1.0 - prev)).ln();
    let mut b = 0.0;
    for _ in 0..LOGISTIC_MAX_ITER {
        let mut score = [0.0; 2];
        let mut info = [0.0; 3];
        for g in 0..3 {
            if counts[g] == 0.0 {
                continue;
            }
            let gf = g as f64;
            let p = 1.0 / (1.0 + (-(a + b * gf)).exp());
            let resid = cases[g] - counts[g] * p;
            let w = counts[g] * p * (1.0 - p);
            score[0] += resid;
            score[1] += resid * gf;
            info[0] += w;
            info[1] += w * gf;
            info[2] += w * gf * gf;
        }
        let det = info[0] * info[2] - info[1] * info[1];
        if !(det > 0.0) || !det.is_finite() {
            return Err(fail("singular information matrix"));
        }
        let score_norm = (score[0] * score[0] + score[1] * score[1]).sqrt();
        if score_norm < LOGISTIC_SCORE_TOL {
            return Ok(Association {
                beta: b,
                se: (info[0] / det).sqrt(),
            });
        }
        let da = (info[2] * score[0] - info[1] * score[1]) / det;
        let db = (-info[1] * score[0] + info[0] * score[1]) / det;
        a += da;
        b += db;
        if !(a.is_finite() && b.is_finite()) {
            return Err(fail("divergent iterations"));
        }
        if da.abs().max(db.abs()) < 1e-13 * (1.0 + a.abs().max(b.abs())) {
            // Step below rounding; the score cannot shrink further.
            let se = (info[0] / det).sqrt();
            return Ok(Association { beta: b, se });
        }
    }
    Err(fail("no convergence within 25 Newton iterations"))
}

/// Logistic regression of a 0/1 outcome on a single genotype vector.
pub fn logistic_regression(g: &[u8], y: &[f64], variant: usize) -> Result<Association> {
    let mut counts = [0.0; 3];
    let mut cases = [0.0; 3];
    for (&gi, &yi) in g.iter().zip(y) {
        counts[gi as usize] += 1.0;
        cases[gi as usize] += yi;
    }
    logistic_grouped(counts, cases, variant)
}

fn logistic_associations(sample: &IndividualSample) -> Result<Vec<Association>> {
    let j = sample.n_variants;
    let mut counts = vec![[0.0f64; 3]; j];
    let mut cases = vec![[0.0f64; 3]; j];
    for i in 0..sample.n {
        let yi = sample.y[i];
        for (v, &g) in sample.genotype_row(i).iter().enumerate() {
            counts[v][g as usize] += 1.0;
            cases[v][g as usize] += yi;
        }
    }
    (0..j).map(|v| logistic_grouped(counts[v], cases[v], v)).collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Two-sample summary statistics: exposure associations from `exposure`,
/// outcome associations from `outcome`.
pub fn summarize_associations(
    exposure: &IndividualSample,
    outcome: &IndividualSample,
    spec: &ScenarioSpec,
) -> Result<SimulatedSummary> {
    let j = exposure.n_variants;
    if outcome.n_variants != j {
        return Err(Error::DimensionMismatch(format!(
            "exposure sample has {j} variants, outcome sample {}",
            outcome.n_variants
        )));
    }
    let gm_x = GenotypeMoments::new(exposure);
    let xs = linear_associations(exposure, &gm_x, &[&exposure.x_star[0], &exposure.x_star[1]])?;
    let (ys, prevalence) = match spec.outcome {
        Outcome::Continuous => {
            let gm_y = GenotypeMoments::new(outcome);
            (linear_associations(outcome, &gm_y, &[&outcome.y])?.remove(0), None)
        }
        Outcome::Binary { .. } => (logistic_associations(outcome)?, Some(outcome.prevalence())),
    };
    let beta_x = DMatrix::from_fn(j, 2, |v, c| xs[c][v].beta);
    let se_x = DMatrix::from_fn(j, 2, |v, c| xs[c][v].se);
    let beta_y = DVector::from_fn(j, |v, _| ys[v].beta);
    let se_y = DVector::from_fn(j, |v, _| ys[v].se);
    let ids = (0..j).map(|v| format!("v{}", v + 1)).collect();
    let dataset = SummaryDataset::from_standard_errors(ids, beta_y, se_y, beta_x, &se_x)?;
    Ok(SimulatedSummary {
        dataset,
        trait_correlation: correlation(&exposure.x_star[0], &exposure.x_star[1]),
        prevalence,
    })
}
