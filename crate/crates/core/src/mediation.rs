//! Proportion of a total effect mediated by other exposures.
//!
//! The proportion is `1 - direct / total`, where the total effect comes from
//! a univariable fit and the direct effect from a multivariable fit. Its
//! standard error keeps the first two delta-method terms and drops the
//! covariance term, which overstates the SE when the two estimators are
//! positively correlated with same-sign effects.

use serde::Serialize;

use crate::data::CausalEstimate;
use crate::error::{Error, Result};
use crate::stats::Z_975;

/// Total effects closer to zero than this are rejected.
const ZERO_TOTAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MediationResult {
    pub total_effect: f64,
    pub se_total: f64,
    pub direct_effect: f64,
    pub se_direct: f64,
    pub proportion_mediated: f64,
    pub se_proportion: f64,
    pub ci: (f64, f64),
}

/// Standard error of `1 - theta_mv / theta_uv` from the two variance terms of
/// the delta method: `sqrt(se_mv^2 / theta_uv^2 + theta_mv^2 se_uv^2 / theta_uv^4)`.
pub fn delta_method_se(theta_mv: f64, se_mv: f64, theta_uv: f64, se_uv: f64) -> Result<f64> {
    if theta_uv.abs() < ZERO_TOTAL_TOL {
        return Err(Error::ZeroTotalEffect(theta_uv));
    }
    if se_mv < 0.0 || se_uv < 0.0 {
        return Err(Error::InvalidOption("standard errors must be non-negative".into()));
    }
    let uv2 = theta_uv * theta_uv;
    Ok((se_mv * se_mv / uv2 + theta_mv * theta_mv * se_uv * se_uv / (uv2 * uv2)).sqrt())
}

/// Full delta-method SE including the covariance term with correlation
/// `rho_tilde` between the two estimators. There is no estimator for
/// `rho_tilde` from summary data, so this is only used as a reference.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn delta_method_se_full(theta_mv: f64, se_mv: f64, theta_uv: f64, se_uv: f64, rho_tilde: f64) -> f64 {
    let uv2 = theta_uv * theta_uv;
    let var = se_mv * se_mv / uv2 + theta_mv * theta_mv * se_uv * se_uv / (uv2 * uv2)
        - 2.0 * theta_mv * se_mv * se_uv * rho_tilde / (uv2 * theta_uv);
    var.max(0.0).sqrt()
}

/// Builds the mediation summary from effect estimates and their SEs.
pub fn mediation_from_effects(theta_uv: f64, se_uv: f64, theta_mv: f64, se_mv: f64) -> Result<MediationResult> {
    let se = delta_method_se(theta_mv, se_mv, theta_uv, se_uv)?;
    let p = 1.0 - theta_mv / theta_uv;
    Ok(MediationResult {
        total_effect: theta_uv,
        se_total: se_uv,
        direct_effect: theta_mv,
        se_direct: se_mv,
        proportion_mediated: p,
        se_proportion: se,
        ci: (p - Z_975 * se, p + Z_975 * se),
    })
}

/// Proportion of the effect of exposure `exposure_index` mediated by the other
/// exposures of `multivariable`.
pub fn proportion_mediated(
    univariable: &CausalEstimate,
    multivariable: &CausalEstimate,
    exposure_index: usize,
) -> Result<MediationResult> {
    if univariable.n_exposures() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "univariable estimate has {} exposures",
            univariable.n_exposures()
        )));
    }
    let k = multivariable.n_exposures();
    if exposure_index >= k {
        return Err(Error::ExposureIndex { index: exposure_index, k });
    }
    mediation_from_effects(
        univariable.theta[0],
        univariable.se(0),
        multivariable.theta[exposure_index],
        multivariable.se(exposure_index),
    )
}

/// Standard error implied by a symmetric 95% normal confidence interval.
pub fn se_from_ci(lower: f64, upper: f64) -> Result<f64> {
    if !(lower.is_finite() && upper.is_finite()) || lower > upper {
        return Err(Error::InvalidOption(format!("malformed confidence interval ({lower}, {upper})")));
    }
    Ok((upper - lower) / (2.0 * Z_975))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Method;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn est(theta: &[f64], se: &[f64]) -> CausalEstimate {
        CausalEstimate {
            theta: DVector::from_row_slice(theta),
            covariance: DMatrix::from_diagonal(&DVector::from_iterator(se.len(), se.iter().map(|s| s * s))),
            method: Method::Ivw,
            converged: true,
            iterations: 0,
            final_objective: 0.0,
        }
    }

    #[test]
    fn no_mediation() {
        let r = proportion_mediated(&est(&[0.3], &[0.05]), &est(&[0.3, 0.1], &[0.07, 0.02]), 0).unwrap();
        assert_eq!(r.proportion_mediated, 0.0);
    }

    #[test]
    fn full_mediation() {
        let r = proportion_mediated(&est(&[0.3], &[0.05]), &est(&[0.0, 0.1], &[0.07, 0.02]), 0).unwrap();
        assert_eq!(r.proportion_mediated, 1.0);
        assert!((r.se_proportion - 0.07 / 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_standard_errors() {
        assert_eq!(delta_method_se(-0.2, 0.0, -0.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_total_effect_rejected() {
        assert!(matches!(delta_method_se(0.1, 0.1, 1e-13, 0.1), Err(Error::ZeroTotalEffect(_))));
        assert!(proportion_mediated(&est(&[0.0], &[0.05]), &est(&[0.1, 0.1], &[0.1, 0.1]), 0).is_err());
    }

    #[test]
    fn wrong_shapes_rejected() {
        assert!(proportion_mediated(&est(&[0.3, 0.1], &[0.05, 0.1]), &est(&[0.3, 0.1], &[0.07, 0.02]), 0).is_err());
        assert!(matches!(
            proportion_mediated(&est(&[0.3], &[0.05]), &est(&[0.3, 0.1], &[0.07, 0.02]), 2),
            Err(Error::ExposureIndex { .. })
        ));
    }

    #[test]
    fn education_chd_standard_error() {
        let se_mv = se_from_ci(-0.353, -0.083).unwrap();
        let se_uv = se_from_ci(-0.584, -0.378).unwrap();
        assert!((se_mv - 0.0689).abs() < 1e-4);
        assert!((se_uv - 0.0526).abs() < 1e-4);
        let se = delta_method_se(-0.218, se_mv, -0.481, se_uv).unwrap();
        assert!((se - 0.1516).abs() < 5e-4, "se {se}");
    }

    /// Effects within the rounding of the three-decimal inputs reproduce the
    /// three-decimal proportion row.
    #[test]
    fn unrounded_effects_reproduce_printed_row() {
        let se_mv = se_from_ci(-0.353, -0.083).unwrap();
        let se_uv = se_from_ci(-0.584, -0.378).unwrap();
        let r = mediation_from_effects(-0.4813, se_uv, -0.2176, se_mv).unwrap();
        let fmt = |x: f64| format!("{x:.3}");
        assert_eq!(fmt(r.proportion_mediated), "0.548");
        assert_eq!((fmt(r.ci.0), fmt(r.ci.1)), ("0.251".to_string(), "0.845".to_string()));
    }

    #[test]
    fn malformed_ci_rejected() {
        assert!(se_from_ci(0.5, 0.1).is_err());
        assert!(se_from_ci(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn ci_is_symmetric() {
        let r = mediation_from_effects(0.4, 0.05, 0.1, 0.06).unwrap();
        assert!((r.ci.0 - (r.proportion_mediated - Z_975 * r.se_proportion)).abs() < 1e-15);
        assert!((r.ci.1 - (r.proportion_mediated + Z_975 * r.se_proportion)).abs() < 1e-15);
        assert!(r.se_proportion >= 0.0);
    }

    fn bootstrap_sd(mv: f64, se_mv: f64, uv: f64, se_uv: f64, draws: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..draws {
            let a: f64 = mv + se_mv * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            let b: f64 = uv + se_uv * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            let p = 1.0 - a / b;
            s += p;
            s2 += p * p;
        }
        let m = s / draws as f64;
        (s2 / draws as f64 - m * m).sqrt()
    }

    #[test]
    fn matches_bootstrap_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (mv, se_mv, uv, se_uv) in [(0.1, 0.03, 0.5, 0.05), (-0.2, 0.05, -0.6, 0.04), (0.3, 0.02, 0.4, 0.02)] {
            let sd = bootstrap_sd(mv, se_mv, uv, se_uv, 200_000, &mut rng);
            let se = delta_method_se(mv, se_mv, uv, se_uv).unwrap();
            assert!((se - sd).abs() / sd < 0.03, "delta {se} vs bootstrap {sd}");
        }
    }

    /// With a coefficient of variation `c` on the total effect, the SD of
    /// `1 / total` exceeds its first-order value by about `sqrt(1 + 8 c^2)`.
    #[test]
    fn understates_spread_of_weakly_separated_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (uv, se_uv) = (0.4, 0.06);
        let cv: f64 = se_uv / uv;
        let sd = bootstrap_sd(0.3, 0.0, uv, se_uv, 400_000, &mut rng);
        let se = delta_method_se(0.3, 0.0, uv, se_uv).unwrap();
        let predicted = (1.0 + 8.0 * cv * cv).sqrt();
        assert!(sd / se > 1.03);
        assert!((sd / se - predicted).abs() < 0.03, "{} vs {predicted}", sd / se);
    }

    proptest! {
        #[test]
        fn sign_invariance(mv in -1.0f64..1.0, uv in 0.05f64..1.0, se_mv in 0.0f64..0.2, se_uv in 0.0f64..0.2) {
            let a = mediation_from_effects(uv, se_uv, mv, se_mv).unwrap();
            let b = mediation_from_effects(-uv, se_uv, -mv, se_mv).unwrap();
            prop_assert!((a.proportion_mediated - b.proportion_mediated).abs() < 1e-12);
            prop_assert!((a.se_proportion - b.se_proportion).abs() < 1e-12);
        }

        #[test]
        fn truncated_se_is_conservative(
            mv in 0.01f64..1.0, uv in 0.05f64..1.0,
            se_mv in 0.001f64..0.2, se_uv in 0.001f64..0.2, rho in 0.0f64..1.0,
        ) {
            let truncated = delta_method_se(mv, se_mv, uv, se_uv).unwrap();
            let full = delta_method_se_full(mv, se_mv, uv, se_uv, rho);
            prop_assert!(truncated >= full - 1e-15);
            let uncorrelated = delta_method_se_full(mv, se_mv, uv, se_uv, 0.0);
            prop_assert!((truncated - uncorrelated).abs() < 1e-15);
        }
    }
}
