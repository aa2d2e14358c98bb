//! Individual-level data generation.
//!
//! ```text
//! X1  = sum_j G_j b_j1 + gamma U + sqrt(1 - gamma^2) e_X1
//! X2  = rho X1 + sqrt(1 - rho^2) (sum_j G_j b_j2 + gamma U + sqrt(1 - gamma^2) e_X2)
//! Xk* = Xk + sigma_zeta_k zeta_k
//! Y   = theta1 X1 + theta2 X2 + U + e_Y          (continuous)
//! Y   ~ Bernoulli(expit(theta0 + theta1 X1 + theta2 X2 + U))   (binary)
//! ```

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::scenario::{Outcome, ScenarioSpec, MEDIATION_NULL_VARIANTS};

/// Probability bounds applied to the binary outcome.
pub const PROBABILITY_CLAMP: (f64, f64) = (1e-6, 1.0 - 1e-6);

/// Allele frequencies and true variant-exposure effects shared by both
/// samples of a replication.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantParams {
    pub maf: Vec<f64>,
    pub beta: [Vec<f64>; 2],
}

pub fn draw_variant_params(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> VariantParams {
    let j = spec.n_variants;
    let (mlo, mhi) = spec.maf_range;
    let (blo, bhi) = spec.beta_range;
    let mut maf = Vec::with_capacity(j);
    let mut b1 = Vec::with_capacity(j);
    let mut b2 = Vec::with_capacity(j);
    for v in 0..j {
        maf.push(uniform(rng, mlo, mhi));
        b1.push(uniform(rng, blo, bhi));
        let b = uniform(rng, blo, bhi);
        b2.push(if spec.mediation_mode && v < MEDIATION_NULL_VARIANTS { 0.0 } else { b });
    }
    VariantParams { maf, beta: [b1, b2] }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// One sample of `n` individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualSample {
    pub n: usize,
    pub n_variants: usize,
    /// Row-major `n x J` genotype counts in `{0, 1, 2}`.
    pub genotypes: Vec<u8>,
    pub x: [Vec<f64>; 2],
    pub x_star: [Vec<f64>; 2],
    pub y: Vec<f64>,
    /// Binary outcome probabilities that hit the clamp bounds.
    pub clamped: usize,
}

impl IndividualSample {
    pub fn genotype_row(&self, i: usize) -> &[u8] {
        &self.genotypes[i * self.n_variants..(i + 1) * self.n_variants]
    }

    pub fn genotype(&self, i: usize, j: usize) -> u8 {
        self.genotypes[i * self.n_variants + j]
    }

    /// Proportion of individuals with `y = 1`; meaningful for binary outcomes.
    pub fn prevalence(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n as f64
    }
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws one sample. Each individual consumes a fixed number of draws in a
/// fixed order, so the stream position never depends on parameter values.
pub fn generate_sample(spec: &ScenarioSpec, params: &VariantParams, rng: &mut ChaCha8Rng) -> IndividualSample {
    let n = spec.n;
    let j = spec.n_variants;
    let thresholds: Vec<(f64, f64)> = params
        .maf
        .iter()
        .map(|&p| {
            let q0 = (1.0 - p) * (1.0 - p);
            (q0, q0 + 2.0 * p * (1.0 - p))
        })
        .collect();
    let gamma = spec.gamma;
    let s_gamma = (1.0 - gamma * gamma).sqrt();
    let rho = spec.rho;
    let s_rho = (1.0 - rho * rho).sqrt();
    let sz = [spec.sigma_zeta_sq[0].sqrt(), spec.sigma_zeta_sq[1].sqrt()];
    let [t1, t2] = spec.theta;

    let mut genotypes = vec![0u8; n * j];
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut x1s = Vec::with_capacity(n);
    let mut x2s = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut clamped = 0;

    for i in 0..n {
        let row = &mut genotypes[i * j..(i + 1) * j];
        let mut a1 = 0.0;
        let mut a2 = 0.0;
        for (v, g) in row.iter_mut().enumerate() {
            let u: f64 = rng.random();
            let (q0, q1) = thresholds[v];
            *g = if u < q0 {
                0
            } else if u < q1 {
                1
            } else {
                2
            };
            if *g > 0 {
                let gf = *g as f64;
                a1 += gf * params.beta[0][v];
                a2 += gf * params.beta[1][v];
            }
        }
        let u_conf: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        let uy: f64 = rng.random();

        let v1 = a1 + gamma * u_conf + s_gamma * e1;
        let v2 = rho * v1 + s_rho * (a2 + gamma * u_conf + s_gamma * e2);
        let lin = t1 * v1 + t2 * v2 + u_conf;
        let yi = match spec.outcome {
            Outcome::Continuous => lin + ey,
            Outcome::Binary { intercept } => {
                let raw = expit(intercept + lin);
                let p = raw.clamp(PROBABILITY_CLAMP.0, PROBABILITY_CLAMP.1);
                if p != raw {
                    clamped += 1;
                }
                if uy < p {
                    1.0
                } else {
                    0.0
                }
            }
        };
        x1.push(v1);
        x2.push(v2);
        x1s.push(v1 + sz[0] * z1);
        x2s.push(v2 + sz[1] * z2);
        y.push(yi);
    }

    IndividualSample {
        n,
        n_variants: j,
        genotypes,
        x: [x1, x2],
        x_star: [x1s, x2s],
        y,
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::{replication_rng, StreamRole};
    use crate::sim::scenario::Scenario;
    use crate::stats::{mean, sample_sd};

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let ma = mean(a);
        let mb = mean(b);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn sample(spec: &ScenarioSpec) -> (VariantParams, IndividualSample) {
        let params = draw_variant_params(spec, &mut replication_rng(spec.seed, 0, StreamRole::Parameters));
        let s = generate_sample(spec, &params, &mut replication_rng(spec.seed, 0, StreamRole::ExposureSample));
        (params, s)
    }

    #[test]
    fn exposure_correlation_matches_analytic_value() {
        // With rho = gamma = 0 the exposures share only genotypes, so their
        // correlation is sum_j h_j b_j1 b_j2 / sqrt(V1 V2), h_j = 2 p (1 - p).
        let spec = ScenarioSpec {
            theta: [0.0, 0.0],
            gamma: 0.0,
            seed: 5,
            ..ScenarioSpec::default()
        };
        let (params, s) = sample(&spec);
        let h: Vec<f64> = params.maf.iter().map(|p| 2.0 * p * (1.0 - p)).collect();
        let cov: f64 = (0..40).map(|j| h[j] * params.beta[0][j] * params.beta[1][j]).sum();
        let v1: f64 = 1.0 + (0..40).map(|j| h[j] * params.beta[0][j].powi(2)).sum::<f64>();
        let v2: f64 = 1.0 + (0..40).map(|j| h[j] * params.beta[1][j].powi(2)).sum::<f64>();
        let expected = cov / (v1 * v2).sqrt();
        let r = corr(&s.x[0], &s.x[1]);
        assert!((r - expected).abs() < 0.05, "corr {r} vs {expected}");
    }

    #[test]
    fn independent_exposures_with_no_genetic_overlap() {
        let spec = ScenarioSpec {
            theta: [0.0, 0.0],
            gamma: 0.0,
            beta_range: (0.0, 0.0),
            seed: 6,
            ..ScenarioSpec::default()
        };
        let (_, s) = sample(&spec);
        assert!(corr(&s.x[0], &s.x[1]).abs() < 0.05);
    }

    #[test]
    fn measurement_error_variance() {
        let spec = ScenarioSpec::scenario(Scenario::S1, 0.0, 4.0, 8);
        let (_, s) = sample(&spec);
        let diff: Vec<f64> = s.x_star[0].iter().zip(&s.x[0]).map(|(a, b)| a - b).collect();
        let var = sample_sd(&diff).powi(2);
        assert!((var - 4.0).abs() < 0.1, "var {var}");
        assert_eq!(s.x_star[1], s.x[1]);
    }

    #[test]
    fn binary_prevalence() {
        let spec = ScenarioSpec::binary(Scenario::S1, 0.0, 0.0, 9);
        let (_, s) = sample(&spec);
        let p = s.prevalence();
        assert!(p > 0.03 && p < 0.07, "prevalence {p}");
        assert!(s.y.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn exposure_variance_matches_moments() {
        let spec = ScenarioSpec {
            n: 200_000,
            seed: 10,
            ..ScenarioSpec::scenario(Scenario::S1, 0.0, 0.0, 10)
        };
        let (params, s) = sample(&spec);
        let expected: f64 = params
            .maf
            .iter()
            .zip(&params.beta[0])
            .map(|(p, b)| 2.0 * p * (1.0 - p) * b * b)
            .sum::<f64>()
            + 1.0;
        let var = sample_sd(&s.x[0]).powi(2);
        assert!((var - expected).abs() / expected < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn mediation_mode_zeroes_leading_effects() {
        let spec = ScenarioSpec::mediation(0.1, 0.0, 0.0, 3);
        let params = draw_variant_params(&spec, &mut replication_rng(3, 0, StreamRole::Parameters));
        assert!(params.beta[1][..MEDIATION_NULL_VARIANTS].iter().all(|&b| b == 0.0));
        assert!(params.beta[1][MEDIATION_NULL_VARIANTS..].iter().all(|&b| b >= 0.08));
    }

    #[test]
    fn genotypes_in_range_and_deterministic() {
        let spec = ScenarioSpec { n: 500, seed: 4, ..ScenarioSpec::default() };
        let (_, a) = sample(&spec);
        let (_, b) = sample(&spec);
        assert_eq!(a, b);
        assert!(a.genotypes.iter().all(|&g| g <= 2));
    }
}
