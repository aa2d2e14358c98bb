//! Small dense solvers used by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivot ratio below which the weighted design is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coef: DVector<f64>,
    /// `(X' W X)^{-1}`.
    pub xtwx_inv: DMatrix<f64>,
    /// Weighted residual sum of squares.
    pub rss: f64,
}

/// Weighted least squares without intercept, solved through a QR
/// factorisation of `W^{1/2} X`.
pub fn weighted_least_squares(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<WlsFit> {
    let (n, k) = x.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design {n}x{k}, response {}, weights {}",
            y.len(),
            w.len()
        )));
    }
    if n < k || k == 0 {
        return Err(Error::SingularGram { ratio: 0.0 });
    }
    let sw = w.map(f64::sqrt);
    let xw = DMatrix::from_fn(n, k, |i, j| x[(i, j)] * sw[i]);
    let yw = y.component_mul(&sw);

    let qr = xw.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min > PIVOT_TOL * max) {
        return Err(Error::SingularGram {
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    let qty = qr.q().transpose() * &yw;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularGram { ratio: min / max })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::SingularGram { ratio: min / max })?;
    let xtwx_inv = &r_inv * r_inv.transpose();
    let resid = &yw - &xw * &coef;
    Ok(WlsFit {
        coef,
        xtwx_inv,
        rss: resid.norm_squared(),
    })
}

/// Symmetrises a matrix in place by averaging with its transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for b in (a + 1)..n {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
}
