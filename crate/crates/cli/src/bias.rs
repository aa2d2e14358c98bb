use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mvmr_me::bias::{estimate_moments_with, predict_ivw_bias_correlated};
use mvmr_me::{apply_trait_correlation, predict_ivw_bias, Centering};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::estimate::checked;
use crate::input::{read_summary, read_trait_correlation};
use crate::output::{emit, fmt_g, to_json, Format, Table, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CenteringArg {
    None,
    Weighted,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    /// Summary statistics TSV with exactly two exposures.
    #[arg(long)]
    pub input: PathBuf,
    /// Correlation of the exposure association estimates. Fills the error
    /// cross-moment used by the correlated bias prediction.
    #[arg(long)]
    pub trait_corr: Option<PathBuf>,
    /// Causal effects `theta1,theta2` at which to predict the IVW bias.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = CenteringArg::None)]
    pub centering: CenteringArg,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BiasReport {
    schema_version: u32,
    command: &'static str,
    exposures: Vec<String>,
    centering: Centering,
    v_x_star: [f64; 2],
    c_x_star: f64,
    v_zeta: [f64; 2],
    c_zeta: f64,
    lambda: [f64; 2],
    rho_star: f64,
    /// Exposures whose attenuation ratio is not below one.
    lambda_warnings: Vec<String>,
    theta: Option<[f64; 2]>,
    /// Prediction that ignores correlated estimation errors.
    predicted_bias: Option<[f64; 2]>,
    /// Prediction including the error cross-moment.
    predicted_bias_correlated: Option<[f64; 2]>,
}

pub fn run(args: BiasArgs) -> CliResult<()> {
    let summary = read_summary(&args.input)?;
    checked(&summary.dataset)?;
    if summary.exposures.len() != 2 {
        return Err(CliError::Input(format!(
            "bias diagnostics need exactly 2 exposures, found {}",
            summary.exposures.len()
        )));
    }
    let dataset = match &args.trait_corr {
        Some(p) => apply_trait_correlation(&summary.dataset, &read_trait_correlation(p, &summary.exposures)?)?,
        None => summary.dataset.clone(),
    };
    let centering = match args.centering {
        CenteringArg::None => Centering::None,
        CenteringArg::Weighted => Centering::Weighted,
    };
    let diag = estimate_moments_with(&dataset, centering)?;
    let warnings: Vec<String> = diag.lambda_warnings().iter().map(|&k| summary.exposures[k].clone()).collect();
    for w in &warnings {
        eprintln!("warning: measurement error variance for exposure {w} is not below the signal variance");
    }
    let theta = match args.theta.as_deref() {
        None => None,
        Some(&[a, b]) => Some([a, b]),
        Some(t) => return Err(CliError::Input(format!("--theta needs 2 values, got {}", t.len()))),
    };
    let (predicted, correlated) = match theta {
        Some(t) => (
            Some(predict_ivw_bias(&diag, t)?),
            Some(predict_ivw_bias_correlated(&diag, t)?),
        ),
        None => (None, None),
    };
    let report = BiasReport {
        schema_version: SCHEMA_VERSION,
        command: "bias-diagnose",
        exposures: summary.exposures.clone(),
        centering,
        v_x_star: diag.v_x_star,
        c_x_star: diag.c_x_star,
        v_zeta: diag.v_zeta,
        c_zeta: diag.c_zeta,
        lambda: diag.lambda,
        rho_star: diag.rho_star,
        lambda_warnings: warnings,
        theta,
        predicted_bias: predicted,
        predicted_bias_correlated: correlated,
    };
    let text = match args.format {
        Format::Json => to_json(&report)?,
        Format::Tsv => {
            let ex = &report.exposures;
            let mut t = Table::new(&["quantity", "exposure", "value"]);
            let mut row = |q: &str, e: &str, v: f64| t.push(vec![q.into(), e.into(), fmt_g(v)]);
            for k in 0..2 {
                row("v_x_star", &ex[k], report.v_x_star[k]);
            }
            row("c_x_star", "", report.c_x_star);
            for k in 0..2 {
                row("v_zeta", &ex[k], report.v_zeta[k]);
            }
            row("c_zeta", "", report.c_zeta);
            for k in 0..2 {
                row("lambda", &ex[k], report.lambda[k]);
            }
            row("rho_star", "", report.rho_star);
            if let (Some(p), Some(c)) = (report.predicted_bias, report.predicted_bias_correlated) {
                for k in 0..2 {
                    row("predicted_bias", &ex[k], p[k]);
                }
                for k in 0..2 {
                    row("predicted_bias_correlated", &ex[k], c[k]);
                }
            }
            t.render()
        }
    };
    emit(&text, args.output.as_deref())
}
