//! Independent reference computations used to check the estimators.

use mvmr_me::SummaryDataset;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random two-sample summary data. `me` scales the exposure-association
/// standard errors; zero gives exact exposure associations.
pub fn random_dataset(rng: &mut ChaCha8Rng, j: usize, k: usize, theta: &[f64], me: f64, corr: f64) -> SummaryDataset {
    let bx_true = DMatrix::from_fn(j, k, |_, _| rng.random_range(0.05..0.25) * if rng.random_bool(0.2) { -1.0 } else { 1.0 });
    let se_x = DMatrix::from_fn(j, k, |_, _| me * rng.random_range(0.01..0.03));
    let se_y = DVector::from_fn(j, |_, _| rng.random_range(0.01..0.03));
    let sigma_x: Vec<DMatrix<f64>> = (0..j)
        .map(|r| DMatrix::from_fn(k, k, |a, b| se_x[(r, a)] * se_x[(r, b)] * if a == b { 1.0 } else { corr }))
        .collect();
    let mut bx = bx_true.clone();
    for r in 0..j {
        let chol = sigma_x[r].clone().cholesky();
        let z = DVector::from_fn(k, |_, _| normal(rng));
        if let Some(c) = chol {
            let e = c.l() * z;
            for a in 0..k {
                bx[(r, a)] += e[a];
            }
        }
    }
    let by = DVector::from_fn(j, |r, _| {
        (0..k).map(|a| bx_true[(r, a)] * theta[a]).sum::<f64>() + se_y[r] * normal(rng)
    });
    SummaryDataset::new((0..j).map(|i| format!("v{i}")).collect(), by, se_y, bx, sigma_x).unwrap()
}

/// Two-exposure profile log-likelihood `-1/2 sum_j (b_Yj - b_Xj' t)^2 / (se_Yj^2 + t' S_j t)`,
/// evaluated from per-variant coefficients without the library code.
pub struct ProfileOracle {
    terms: Vec<[f64; 7]>,
}

impl ProfileOracle {
    pub fn new(d: &SummaryDataset) -> Self {
        let terms = (0..d.n_variants())
            .map(|j| {
                let s = &d.sigma_x()[j];
                [
                    d.beta_y()[j],
                    d.beta_x()[(j, 0)],
                    d.beta_x()[(j, 1)],
                    d.se_y()[j] * d.se_y()[j],
                    s[(0, 0)],
                    s[(0, 1)] + s[(1, 0)],
                    s[(1, 1)],
                ]
            })
            .collect();
        Self { terms }
    }

    pub fn loglik(&self, t1: f64, t2: f64) -> f64 {
        let mut total = 0.0;
        for &[by, b1, b2, vy, s11, s12, s22] in &self.terms {
            let e = by - b1 * t1 - b2 * t2;
            total += e * e / (vy + s11 * t1 * t1 + s12 * t1 * t2 + s22 * t2 * t2);
        }
        -0.5 * total
    }

    /// Exhaustive grid over `[-1, 1]^2` followed by compass search.
    pub fn maximize(&self, step: f64) -> [f64; 2] {
        let n = (2.0 / step).round() as i64;
        let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
        for a in 0..=n {
            let t1 = -1.0 + a as f64 * step;
            for b in 0..=n {
                let t2 = -1.0 + b as f64 * step;
                let l = self.loglik(t1, t2);
                if l > best.0 {
                    best = (l, [t1, t2]);
                }
            }
        }
        let (mut value, mut point) = best;
        let mut h = step;
        while h > 1e-11 {
            let mut moved = false;
            for (d1, d2) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                let l = self.loglik(point[0] + d1, point[1] + d2);
                if l > value {
                    value = l;
                    point = [point[0] + d1, point[1] + d2];
                    moved = true;
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        point
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Without measurement error the maximizer is weighted least squares,
    /// solved here from the 2x2 normal equations.
    #[test]
    fn oracle_recovers_weighted_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_dataset(&mut rng, 30, 2, &[0.3, -0.2], 0.0, 0.0);
        let (mut a, mut b, mut c, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..30 {
            let w = d.se_y()[j].powi(-2);
            let (x1, x2, y) = (d.beta_x()[(j, 0)], d.beta_x()[(j, 1)], d.beta_y()[j]);
            a += w * x1 * x1;
            b += w * x1 * x2;
            c += w * x2 * x2;
            r1 += w * x1 * y;
            r2 += w * x2 * y;
        }
        let det = a * c - b * b;
        let wls = [(c * r1 - b * r2) / det, (a * r2 - b * r1) / det];
        let got = ProfileOracle::new(&d).maximize(1e-2);
        assert!((got[0] - wls[0]).abs() < 1e-8 && (got[1] - wls[1]).abs() < 1e-8, "{got:?} vs {wls:?}");
    }
}
