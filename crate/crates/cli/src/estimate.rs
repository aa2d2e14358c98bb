use std::path::PathBuf;

use clap::Args;
use mvmr_me::ivw::fit_ivw_with;
use mvmr_me::{apply_trait_correlation, fit_mle, validate, CausalEstimate, IvwOptions, Method, MleOptions, SummaryDataset};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::input::{read_summary, read_trait_correlation};
use crate::output::{emit, fmt_g, fmt_p, to_json, Format, Table, SCHEMA_VERSION};

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Summary statistics TSV.
    #[arg(long)]
    pub input: PathBuf,
    /// K x K correlation between the exposure association estimates.
    #[arg(long)]
    pub trait_corr: Option<PathBuf>,
    /// Run IVW. Without any method flag, IVW and MLE run, plus MLE_COR when
    /// a trait correlation is given.
    #[arg(long)]
    pub ivw: bool,
    #[arg(long)]
    pub mle: bool,
    /// MLE using the trait correlation; requires --trait-corr.
    #[arg(long)]
    pub mle_cor: bool,
    /// Multiplicative random-effects IVW standard errors.
    #[arg(long)]
    pub random_effects: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iterations: usize,
    /// MLE starting points (the IVW estimate plus random perturbations).
    #[arg(long, default_value_t = 5)]
    pub n_starts: usize,
    /// Seed for the MLE start perturbations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ExposureEstimate {
    exposure: String,
    estimate: f64,
    se: f64,
    ci_lower: f64,
    ci_upper: f64,
    p_value: f64,
}

#[derive(Debug, Serialize)]
struct MethodResult {
    method: Method,
    converged: bool,
    iterations: usize,
    objective: f64,
    estimates: Vec<ExposureEstimate>,
    covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    schema_version: u32,
    command: &'static str,
    n_variants: usize,
    exposures: Vec<String>,
    ivw_random_effects: bool,
    results: Vec<MethodResult>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Rejects datasets that break any invariant, listing every failure.
pub fn checked(dataset: &SummaryDataset) -> CliResult<()> {
    let report = validate(dataset);
    if report.is_valid() {
        return Ok(());
    }
    let failures: Vec<String> = report
        .failures()
        .map(|c| {
            let mut s = c.invariant.to_string();
            if !c.indices.is_empty() {
                let ids: Vec<&str> = c.indices.iter().map(|&i| dataset.variant_ids()[i].as_str()).collect();
                s.push_str(&format!(" (variants {})", ids.join(", ")));
            }
            if !c.detail.is_empty() {
                s.push_str(&format!(": {}", c.detail));
            }
            s
        })
        .collect();
    Err(CliError::Input(format!("invalid summary data: {}", failures.join("; "))))
}

pub fn mle_options(tolerance: f64, max_iterations: usize, n_starts: usize, seed: u64) -> CliResult<MleOptions> {
    let o = MleOptions {
        tolerance,
        max_iterations,
        n_starts,
        seed,
    };
    o.validate()?;
    Ok(o)
}

pub fn run(args: EstimateArgs) -> CliResult<()> {
    let summary = read_summary(&args.input)?;
    let base = summary.dataset;
    checked(&base)?;
    let corr = args
        .trait_corr
        .as_deref()
        .map(|p| read_trait_correlation(p, &summary.exposures))
        .transpose()?;

    let mut methods = Vec::new();
    if args.ivw {
        methods.push(Method::Ivw);
    }
    if args.mle {
        methods.push(Method::Mle);
    }
    if args.mle_cor {
        methods.push(Method::MleCor);
    }
    if methods.is_empty() {
        methods = vec![Method::Ivw, Method::Mle];
        if corr.is_some() {
            methods.push(Method::MleCor);
        }
    }
    let correlated = match &corr {
        Some(c) => Some(apply_trait_correlation(&base, c)?),
        None if methods.contains(&Method::MleCor) => {
            return Err(CliError::Input("--mle-cor requires --trait-corr".into()));
        }
        None => None,
    };
    let mle = mle_options(args.tolerance, args.max_iterations, args.n_starts, args.seed)?;
    let ivw = IvwOptions {
        random_effects: args.random_effects,
    };

    let mut results = Vec::new();
    for &method in &methods {
        let fit: CausalEstimate = match method {
            Method::Ivw => fit_ivw_with(&base, &ivw),
            Method::Mle => fit_mle(&base, &mle),
            _ => fit_mle(correlated.as_ref().expect("checked above"), &mle),
        }
        .map_err(|e| CliError::Estimation(format!("{method}: {e}")))?;
        if !fit.converged {
            eprintln!("warning: {method} did not converge within {} iterations", args.max_iterations);
        }
        let estimates = summary
            .exposures
            .iter()
            .enumerate()
            .map(|(k, label)| {
                let (lo, hi) = fit.ci95(k);
                ExposureEstimate {
                    exposure: label.clone(),
                    estimate: fit.theta[k],
                    se: fit.se(k),
                    ci_lower: lo,
                    ci_upper: hi,
                    p_value: fit.p_value(k),
                }
            })
            .collect();
        results.push(MethodResult {
            method,
            converged: fit.converged,
            iterations: fit.iterations,
            objective: fit.final_objective,
            estimates,
            covariance: rows(&fit.covariance),
        });
    }

    let text = match args.format {
        Format::Json => to_json(&EstimateReport {
            schema_version: SCHEMA_VERSION,
            command: "estimate",
            n_variants: base.n_variants(),
            exposures: summary.exposures.clone(),
            ivw_random_effects: args.random_effects,
            results,
        })?,
        Format::Tsv => {
            let mut t = Table::new(&[
                "method", "exposure", "estimate", "se", "ci_lower", "ci_upper", "p_value", "converged", "iterations",
            ]);
            for r in &results {
                for e in &r.estimates {
                    t.push(vec![
                        r.method.to_string(),
                        e.exposure.clone(),
                        fmt_g(e.estimate),
                        fmt_g(e.se),
                        fmt_g(e.ci_lower),
                        fmt_g(e.ci_upper),
                        fmt_p(e.p_value),
                        r.converged.to_string(),
                        r.iterations.to_string(),
                    ]);
                }
            }
            t.render()
        }
    };
    emit(&text, args.output.as_deref())
}
