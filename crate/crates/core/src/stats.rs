//! Normal-theory helpers shared by the estimators and the Monte Carlo engine.

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// Two-sided Wald p-value for `estimate / se`.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if se <= 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    let z = (estimate / se).abs();
    2.0 * standard_normal().sf(z)
}

/// Quantile of the standard normal distribution.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Median of a slice. NaNs are dropped; an empty input yields NaN.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}
