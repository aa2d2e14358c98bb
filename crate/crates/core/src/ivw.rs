//! Inverse-variance weighted estimation.
//!
//! The multivariable estimator is the weighted regression of the outcome
//! associations on the exposure associations through the origin, with
//! weights `1 / se_y^2`. It never reads `sigma_x`.

use crate::data::{CausalEstimate, Method, SummaryDataset};
use crate::error::{Error, Result};
use crate::linalg::weighted_least_squares;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IvwOptions {
    /// Inflate the fixed-effect covariance by `max(1, RSS / (J - K))`.
    pub random_effects: bool,
}

/// Fixed-effect multivariable IVW.
pub fn fit_ivw(dataset: &SummaryDataset) -> Result<CausalEstimate> {
    fit_ivw_with(dataset, &IvwOptions::default())
}

pub fn fit_ivw_with(dataset: &SummaryDataset, options: &IvwOptions) -> Result<CausalEstimate> {
    let fit = weighted_least_squares(dataset.beta_x(), dataset.beta_y(), &dataset.weights())?;
    let mut covariance = fit.xtwx_inv;
    if options.random_effects {
        let df = dataset.n_variants().saturating_sub(dataset.n_exposures());
        if df > 0 {
            let phi = (fit.rss / df as f64).max(1.0);
            covariance *= phi;
        }
    }
    Ok(CausalEstimate {
        theta: fit.coef,
        covariance,
        method: Method::Ivw,
        converged: true,
        iterations: 0,
        final_objective: fit.rss,
    })
}

/// IVW using only exposure `exposure_index`.
pub fn fit_ivw_univariable(dataset: &SummaryDataset, exposure_index: usize) -> Result<CausalEstimate> {
    fit_ivw_univariable_with(dataset, exposure_index, &IvwOptions::default())
}

pub fn fit_ivw_univariable_with(
    dataset: &SummaryDataset,
    exposure_index: usize,
    options: &IvwOptions,
) -> Result<CausalEstimate> {
    let k = dataset.n_exposures();
    if exposure_index >= k {
        return Err(Error::ExposureIndex { index: exposure_index, k });
    }
    let all: Vec<usize> = (0..dataset.n_variants()).collect();
    let single = dataset.subset(&all, &[exposure_index])?;
    let mut est = fit_ivw_with(&single, options)?;
    est.method = Method::IvwUnivariable;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(rng: &mut ChaCha8Rng, j: usize, k: usize) -> SummaryDataset {
        let bx = DMatrix::from_fn(j, k, |_, _| rng.random_range(-0.3..0.3));
        let se_y = DVector::from_fn(j, |_, _| rng.random_range(0.01..0.05));
        let by = DVector::from_fn(j, |i, _| {
            0.2 * bx[(i, 0)] - 0.1 * bx[(i, k - 1)] + se_y[i] * rng.sample::<f64, _>(StandardNormal)
        });
        let se_x = DMatrix::from_fn(j, k, |_, _| rng.random_range(0.005..0.02));
        SummaryDataset::from_standard_errors(
            (0..j).map(|i| format!("v{i}")).collect(),
            by,
            se_y,
            bx,
            &se_x,
        )
        .unwrap()
    }

    /// Normal equations assembled by explicit summation and solved by
    /// Gaussian elimination.
    fn normal_equations_oracle(d: &SummaryDataset) -> Vec<f64> {
        let k = d.n_exposures();
        let mut a = vec![vec![0.0; k + 1]; k];
        for j in 0..d.n_variants() {
            let w = 1.0 / (d.se_y()[j] * d.se_y()[j]);
            for r in 0..k {
                for c in 0..k {
                    a[r][c] += w * d.beta_x()[(j, r)] * d.beta_x()[(j, c)];
                }
                a[r][k] += w * d.beta_y()[j] * d.beta_x()[(j, r)];
            }
        }
        for p in 0..k {
            let piv = (p..k).max_by(|&x, &y| a[x][p].abs().total_cmp(&a[y][p].abs())).unwrap();
            a.swap(p, piv);
            for r in 0..k {
                if r != p {
                    let f = a[r][p] / a[p][p];
                    for c in p..=k {
                        a[r][c] -= f * a[p][c];
                    }
                }
            }
        }
        (0..k).map(|r| a[r][k] / a[r][r]).collect()
    }

    #[test]
    fn noiseless_identity() {
        let bx = DMatrix::from_fn(10, 2, |i, j| 0.05 + 0.01 * ((i * 7 + j * 3) % 11) as f64);
        let theta = DVector::from_vec(vec![0.2, 0.0]);
        let by = &bx * &theta;
        let d = SummaryDataset::from_standard_errors(
            (0..10).map(|i| i.to_string()).collect(),
            by,
            DVector::from_element(10, 0.02),
            bx,
            &DMatrix::zeros(10, 2),
        )
        .unwrap();
        let est = fit_ivw(&d).unwrap();
        assert!((est.theta[0] - 0.2).abs() < 1e-13);
        assert!(est.theta[1].abs() < 1e-13);
        assert!(est.converged);
        assert_eq!(est.iterations, 0);
        assert_eq!(est.method, Method::Ivw);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = random_dataset(&mut rng, 40, 2);
            let est = fit_ivw(&d).unwrap();
            let oracle = normal_equations_oracle(&d);
            for k in 0..2 {
                assert!((est.theta[k] - oracle[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn univariable_special_case() {
        let bx = DMatrix::from_fn(8, 1, |i, _| 0.05 + 0.02 * i as f64);
        let by = &bx * 0.5;
        let d = SummaryDataset::from_standard_errors(
            (0..8).map(|i| i.to_string()).collect(),
            by.column(0).into_owned(),
            DVector::from_element(8, 0.03),
            bx,
            &DMatrix::from_element(8, 1, 0.01),
        )
        .unwrap();
        let est = fit_ivw_univariable(&d, 0).unwrap();
        assert!((est.theta[0] - 0.5).abs() < 1e-13);
        assert_eq!(est.method, Method::IvwUnivariable);
    }

    #[test]
    fn univariable_equals_single_column_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dataset(&mut rng, 30, 3);
        let uni = fit_ivw_univariable(&d, 1).unwrap();
        let all: Vec<usize> = (0..30).collect();
        let single = fit_ivw(&d.subset(&all, &[1]).unwrap()).unwrap();
        assert_eq!(uni.theta, single.theta);
        assert_eq!(uni.covariance, single.covariance);
        assert!(matches!(fit_ivw_univariable(&d, 3), Err(Error::ExposureIndex { .. })));
    }

    #[test]
    fn collinear_exposures_fail_explicitly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_dataset(&mut rng, 20, 2);
        let mut bx = d.beta_x().clone();
        for j in 0..20 {
            bx[(j, 1)] = 2.0 * bx[(j, 0)];
        }
        let err = fit_ivw(&d.with_beta_x(bx).unwrap()).unwrap_err();
        assert!(matches!(err, Error::SingularGram { .. }));
    }

    #[test]
    fn ignores_sigma_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_dataset(&mut rng, 25, 2);
        let other = d.with_sigma_x(vec![DMatrix::from_element(2, 2, 7.0); 25]).unwrap();
        assert_eq!(fit_ivw(&d).unwrap(), fit_ivw(&other).unwrap());
    }

    #[test]
    fn random_effects_never_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = random_dataset(&mut rng, 40, 2);
        let fe = fit_ivw(&d).unwrap();
        let re = fit_ivw_with(&d, &IvwOptions { random_effects: true }).unwrap();
        let phi = (fe.final_objective / 38.0).max(1.0);
        assert_eq!(fe.theta, re.theta);
        assert!((re.covariance[(0, 0)] - phi * fe.covariance[(0, 0)]).abs() < 1e-15);
    }

    #[test]
    fn unbiased_without_measurement_error() {
        // Fixed beta_X, 5000 outcome draws from the IVW model.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let j = 40;
        let bx = DMatrix::from_fn(j, 2, |_, _| rng.random_range(0.08..0.2));
        let se_y = DVector::from_element(j, 0.05);
        let theta = DVector::from_vec(vec![0.2, -0.1]);
        let mean_y = &bx * &theta;
        let reps = 5000;
        let mut sums = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..reps {
            let by = DVector::from_fn(j, |i, _| mean_y[i] + se_y[i] * rng.sample::<f64, _>(StandardNormal));
            let d = SummaryDataset::from_standard_errors(
                (0..j).map(|i| i.to_string()).collect(),
                by,
                se_y.clone(),
                bx.clone(),
                &DMatrix::zeros(j, 2),
            )
            .unwrap();
            let est = fit_ivw(&d).unwrap();
            for k in 0..2 {
                let e = est.theta[k] - theta[k];
                sums[k] += e;
                sq[k] += e * e;
            }
        }
        for k in 0..2 {
            let m = sums[k] / reps as f64;
            let sd = (sq[k] / reps as f64 - m * m).sqrt();
            let mcse = sd / (reps as f64).sqrt();
            assert!(m.abs() < 3.0 * mcse, "coef {k}: mean error {m}, mcse {mcse}");
        }
    }

    proptest! {
        #[test]
        fn permutation_equivariance(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_dataset(&mut rng, 15, 3);
            let perm = [2usize, 0, 1];
            let all: Vec<usize> = (0..15).collect();
            let permuted = d.subset(&all, &perm).unwrap();
            let a = fit_ivw(&d).unwrap();
            let b = fit_ivw(&permuted).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                prop_assert!((b.theta[new] - a.theta[old]).abs() < 1e-10);
            }
        }

        #[test]
        fn scale_equivariance(seed in 0u64..1000, c in 0.1f64..10.0, col in 0usize..2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_dataset(&mut rng, 15, 2);
            let mut bx = d.beta_x().clone();
            bx.column_mut(col).scale_mut(c);
            let a = fit_ivw(&d).unwrap();
            let b = fit_ivw(&d.with_beta_x(bx).unwrap()).unwrap();
            let other = 1 - col;
            prop_assert!((b.theta[col] - a.theta[col] / c).abs() < 1e-9 * (1.0 + a.theta[col].abs()));
            prop_assert!((b.theta[other] - a.theta[other]).abs() < 1e-9 * (1.0 + a.theta[other].abs()));
        }
    }
}
