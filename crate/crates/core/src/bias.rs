//! Plug-in moments and predicted asymptotic IVW bias for two exposures.
//!
//! With `w_j = 1 / se_Yj^2`, the plug-in moments are
//! `v*_k = J^-1 sum_j w_j b*_jk^2`, `c* = J^-1 sum_j w_j b*_j1 b*_j2` and
//! `v_zeta_k = J^-1 sum_j w_j S_jkk`. The attenuation ratios are
//! `lambda_k = v_zeta_k / v*_k` and `rho* = c* / sqrt(v*_1 v*_2)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::SummaryDataset;
use crate::error::{Error, Result};

/// How the exposure-association columns are centred before taking moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Centering {
    /// Raw moments. These are the moments of the Gram matrix the IVW
    /// estimator inverts (regression through the origin).
    #[default]
    None,
    /// Columns centred to weighted mean zero (weights `1 / se_y^2`).
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasDiagnostics {
    pub v_x_star: [f64; 2],
    pub c_x_star: f64,
    pub v_zeta: [f64; 2],
    /// Weighted mean of the `sigma_x` off-diagonals; zero for diagonal inputs.
    pub c_zeta: f64,
    pub lambda: [f64; 2],
    pub rho_star: f64,
    pub predicted_bias: Option<[f64; 2]>,
    pub centering: Centering,
}

impl BiasDiagnostics {
    /// Indices `k` with `v_zeta_k >= v*_k` (attenuation ratio outside `[0, 1)`).
    pub fn lambda_warnings(&self) -> Vec<usize> {
        (0..2).filter(|&k| !(self.lambda[k] < 1.0)).collect()
    }

    /// Returns a copy with `predicted_bias` filled in for `theta`.
    pub fn with_prediction(mut self, theta: [f64; 2]) -> Result<Self> {
        self.predicted_bias = Some(predict_ivw_bias(&self, theta)?);
        Ok(self)
    }
}

/// Raw (uncentred) plug-in moments.
pub fn estimate_moments(dataset: &SummaryDataset) -> Result<BiasDiagnostics> {
    estimate_moments_with(dataset, Centering::None)
}

pub fn estimate_moments_with(dataset: &SummaryDataset, centering: Centering) -> Result<BiasDiagnostics> {
    let k = dataset.n_exposures();
    if k != 2 {
        return Err(Error::UnsupportedDimension { expected: 2, got: k });
    }
    let j = dataset.n_variants();
    let w = dataset.weights();
    let mut bx: DMatrix<f64> = dataset.beta_x().clone();
    if centering == Centering::Weighted {
        let total_w = w.sum();
        for c in 0..2 {
            let m = bx.column(c).dot(&w) / total_w;
            bx.column_mut(c).add_scalar_mut(-m);
        }
    }
    let jf = j as f64;
    let moment = |a: &DVector<f64>, b: &DVector<f64>| -> f64 {
        (0..j).map(|i| w[i] * a[i] * b[i]).sum::<f64>() / jf
    };
    let c1 = bx.column(0).into_owned();
    let c2 = bx.column(1).into_owned();
    let v_x_star = [moment(&c1, &c1), moment(&c2, &c2)];
    let c_x_star = moment(&c1, &c2);
    let sx = dataset.sigma_x();
    let v_zeta = [
        (0..j).map(|i| w[i] * sx[i][(0, 0)]).sum::<f64>() / jf,
        (0..j).map(|i| w[i] * sx[i][(1, 1)]).sum::<f64>() / jf,
    ];
    let c_zeta = (0..j).map(|i| w[i] * 0.5 * (sx[i][(0, 1)] + sx[i][(1, 0)])).sum::<f64>() / jf;
    let lambda = [v_zeta[0] / v_x_star[0], v_zeta[1] / v_x_star[1]];
    let rho_star = (c_x_star / (v_x_star[0] * v_x_star[1]).sqrt()).clamp(-1.0, 1.0);
    Ok(BiasDiagnostics {
        v_x_star,
        c_x_star,
        v_zeta,
        c_zeta,
        lambda,
        rho_star,
        predicted_bias: None,
        centering,
    })
}

/// Asymptotic bias of the IVW estimator at `theta`, assuming independent
/// estimation errors across the two exposures:
///
/// ```text
/// bias_1 = -(lambda_1 theta_1 - lambda_2 rho* sqrt(v*_2 / v*_1) theta_2) / (1 - rho*^2)
/// bias_2 = -(lambda_2 theta_2 - lambda_1 rho* sqrt(v*_1 / v*_2) theta_1) / (1 - rho*^2)
/// ```
pub fn predict_ivw_bias(diag: &BiasDiagnostics, theta: [f64; 2]) -> Result<[f64; 2]> {
    let rho = diag.rho_star;
    if !(rho.abs() < 1.0) {
        return Err(Error::DegenerateCollinearity(rho.abs()));
    }
    let [l1, l2] = diag.lambda;
    let [v1, v2] = diag.v_x_star;
    let denom = 1.0 - rho * rho;
    let b1 = -(l1 * theta[0] - l2 * rho * (v2 / v1).sqrt() * theta[1]) / denom;
    let b2 = -(l2 * theta[1] - l1 * rho * (v1 / v2).sqrt() * theta[0]) / denom;
    Ok([b1, b2])
}

/// Asymptotic IVW bias `-M^-1 C theta` allowing correlated estimation errors,
/// where `M` holds the exposure moments and `C` the error moments including
/// `c_zeta`. Equal to [`predict_ivw_bias`] when `c_zeta = 0`.
pub fn predict_ivw_bias_correlated(diag: &BiasDiagnostics, theta: [f64; 2]) -> Result<[f64; 2]> {
    let rho = diag.rho_star;
    if !(rho.abs() < 1.0) {
        return Err(Error::DegenerateCollinearity(rho.abs()));
    }
    let [v1, v2] = diag.v_x_star;
    let c = diag.c_x_star;
    let det = v1 * v2 - c * c;
    let ct = [
        diag.v_zeta[0] * theta[0] + diag.c_zeta * theta[1],
        diag.c_zeta * theta[0] + diag.v_zeta[1] * theta[1],
    ];
    Ok([-(v2 * ct[0] - c * ct[1]) / det, -(-c * ct[0] + v1 * ct[1]) / det])
}
