//! Instrument strength of the measured exposures.
//!
//! The F statistic regresses each measured exposure on all variants jointly.
//! The conditional F statistic first projects out the part of the exposure
//! predicted by the other exposure's genetic prediction and uses `J - 1`
//! numerator degrees of freedom.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::dgp::IndividualSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FStatistics {
    pub f: [f64; 2],
    pub conditional_f: [f64; 2],
}

/// First-stage F statistics for both measured exposures.
pub fn f_statistics(sample: &IndividualSample) -> Result<FStatistics> {
    let n = sample.n;
    let j = sample.n_variants;
    if n <= j + 1 {
        return Err(Error::DimensionMismatch(format!("{n} individuals for {j} variants")));
    }
    let nf = n as f64;
    let mut gtg = DMatrix::<f64>::zeros(j, j);
    let mut sum_g = DVector::<f64>::zeros(j);
    let mut gtx = [DVector::<f64>::zeros(j), DVector::<f64>::zeros(j)];
    let mut buf = vec![0.0; j];
    for i in 0..n {
        for (b, &g) in buf.iter_mut().zip(sample.genotype_row(i)) {
            *b = g as f64;
        }
        let xs = [sample.x_star[0][i], sample.x_star[1][i]];
        for a in 0..j {
            let ga = buf[a];
            if ga == 0.0 {
                continue;
            }
            sum_g[a] += ga;
            gtx[0][a] += ga * xs[0];
            gtx[1][a] += ga * xs[1];
            for b in a..j {
                gtg[(a, b)] += ga * buf[b];
            }
        }
    }
    let mean_g = &sum_g / nf;
    for a in 0..j {
        for b in a..j {
            let c = gtg[(a, b)] - nf * mean_g[a] * mean_g[b];
            gtg[(a, b)] = c;
            gtg[(b, a)] = c;
        }
    }
    let mut sxx = [[0.0; 2]; 2];
    let means = [
        sample.x_star[0].iter().sum::<f64>() / nf,
        sample.x_star[1].iter().sum::<f64>() / nf,
    ];
    for i in 0..n {
        let d = [sample.x_star[0][i] - means[0], sample.x_star[1][i] - means[1]];
        sxx[0][0] += d[0] * d[0];
        sxx[0][1] += d[0] * d[1];
        sxx[1][1] += d[1] * d[1];
    }
    sxx[1][0] = sxx[0][1];
    for k in 0..2 {
        gtx[k] -= &mean_g * (means[k] * nf);
    }
    let chol = gtg.cholesky().ok_or(Error::RankDeficientGenotypes)?;
    let b = [chol.solve(&gtx[0]), chol.solve(&gtx[1])];
    let ssr = [b[0].dot(&gtx[0]), b[1].dot(&gtx[1])];
    let jf = j as f64;
    let f = [0, 1].map(|k| (ssr[k] / jf) / ((sxx[k][k] - ssr[k]) / (nf - jf - 1.0)));

    let conditional_f = [0, 1].map(|k| {
        let o = 1 - k;
        // Coefficient of the exposure on the other exposure's genetic
        // prediction.
        let cross = b[o].dot(&gtx[k]);
        let a = cross / ssr[o];
        let gtr = &gtx[k] - &gtx[o] * a;
        let br = &b[k] - &b[o] * a;
        let ssr_r = br.dot(&gtr);
        let tss_r = sxx[k][k] - 2.0 * a * cross + a * a * ssr[o];
        (ssr_r / (jf - 1.0)) / ((tss_r - ssr_r) / (nf - jf))
    });
    Ok(FStatistics { f, conditional_f })
}
