use std::path::PathBuf;

use clap::Args;
use mvmr_me::ivw::{fit_ivw_univariable_with, fit_ivw_with};
use mvmr_me::mediation::{mediation_from_effects, se_from_ci};
use mvmr_me::{apply_trait_correlation, fit_mle, proportion_mediated, IvwOptions, MediationResult, Method};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::estimate::{checked, mle_options};
use crate::input::{parse_effects, read_summary, read_text, read_trait_correlation, EffectRow};
use crate::output::{emit, fmt_g, to_json, Format, Table, SCHEMA_VERSION};
use crate::MethodArg;

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["effects", "input"])))]
pub struct MediateArgs {
    /// Published total and direct effects: TSV with columns effect
    /// (total|direct), estimate, ci_lower, ci_upper. 95% intervals.
    #[arg(long)]
    pub effects: Option<PathBuf>,
    /// Multivariable summary statistics TSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Separate single-exposure summary statistics for the total effect.
    /// Defaults to the exposure's own columns in --input.
    #[arg(long, requires = "input")]
    pub univariable: Option<PathBuf>,
    /// Exposure whose effect is decomposed; defaults to the first.
    #[arg(long, requires = "input")]
    pub exposure: Option<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Ivw, requires = "input")]
    pub method: MethodArg,
    #[arg(long, requires = "input")]
    pub trait_corr: Option<PathBuf>,
    #[arg(long)]
    pub random_effects: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct MediationReport {
    schema_version: u32,
    command: &'static str,
    method: Option<Method>,
    exposure: Option<String>,
    total_effect: f64,
    se_total: f64,
    direct_effect: f64,
    se_direct: f64,
    proportion_mediated: f64,
    se_proportion: f64,
    ci_lower: f64,
    ci_upper: f64,
}

fn from_effects(total: EffectRow, direct: EffectRow) -> CliResult<MediationResult> {
    let se_uv = se_from_ci(total.ci_lower, total.ci_upper).map_err(|e| CliError::Input(e.to_string()))?;
    let se_mv = se_from_ci(direct.ci_lower, direct.ci_upper).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(mediation_from_effects(total.estimate, se_uv, direct.estimate, se_mv)?)
}

fn from_summary(args: &MediateArgs, input: &std::path::Path) -> CliResult<(MediationResult, String)> {
    let summary = read_summary(input)?;
    checked(&summary.dataset)?;
    let k = summary.exposures.len();
    if k < 2 {
        return Err(CliError::Input(format!("mediation needs at least 2 exposures, found {k}")));
    }
    let label = args.exposure.clone().unwrap_or_else(|| summary.exposures[0].clone());
    let index = summary
        .exposure_index(&label)
        .ok_or_else(|| CliError::Input(format!("unknown exposure `{label}`; have {:?}", summary.exposures)))?;
    let method: Method = args.method.into();
    let mle = mle_options(1e-8, 1000, 5, args.seed)?;
    let ivw = IvwOptions {
        random_effects: args.random_effects,
    };

    let multivariable = match method {
        Method::Ivw => fit_ivw_with(&summary.dataset, &ivw),
        Method::Mle => fit_mle(&summary.dataset, &mle),
        _ => {
            let path = args
                .trait_corr
                .as_deref()
                .ok_or_else(|| CliError::Input("--method mle-cor requires --trait-corr".into()))?;
            let corr = read_trait_correlation(path, &summary.exposures)?;
            fit_mle(&apply_trait_correlation(&summary.dataset, &corr)?, &mle)
        }
    }
    .map_err(|e| CliError::Estimation(format!("multivariable {method}: {e}")))?;

    let (uv_data, uv_index) = match &args.univariable {
        Some(p) => {
            let uv = read_summary(p)?;
            checked(&uv.dataset)?;
            if uv.exposures.len() != 1 {
                return Err(CliError::Input(format!(
                    "{}: univariable input must have one exposure, found {}",
                    p.display(),
                    uv.exposures.len()
                )));
            }
            (uv.dataset, 0)
        }
        None => {
            let all: Vec<usize> = (0..summary.dataset.n_variants()).collect();
            (summary.dataset.subset(&all, &[index])?, 0)
        }
    };
    let univariable = match method {
        Method::Ivw => fit_ivw_univariable_with(&uv_data, uv_index, &ivw),
        _ => fit_mle(&uv_data, &mle),
    }
    .map_err(|e| CliError::Estimation(format!("univariable {method}: {e}")))?;
    Ok((proportion_mediated(&univariable, &multivariable, index)?, label))
}

pub fn run(args: MediateArgs) -> CliResult<()> {
    let (result, method, exposure) = match (&args.effects, &args.input) {
        (Some(path), _) => {
            let (total, direct) = parse_effects(&read_text(path)?, &path.display().to_string())?;
            (from_effects(total, direct)?, None, None)
        }
        (None, Some(input)) => {
            let (r, label) = from_summary(&args, input)?;
            (r, Some(args.method.into()), Some(label))
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let report = MediationReport {
        schema_version: SCHEMA_VERSION,
        command: "mediate",
        method,
        exposure,
        total_effect: result.total_effect,
        se_total: result.se_total,
        direct_effect: result.direct_effect,
        se_direct: result.se_direct,
        proportion_mediated: result.proportion_mediated,
        se_proportion: result.se_proportion,
        ci_lower: result.ci.0,
        ci_upper: result.ci.1,
    };
    let text = match args.format {
        Format::Json => to_json(&report)?,
        Format::Tsv => {
            let mut t = Table::new(&[
                "total_effect",
                "se_total",
                "direct_effect",
                "se_direct",
                "proportion_mediated",
                "se_proportion",
                "ci_lower",
                "ci_upper",
            ]);
            t.push(
                [
                    report.total_effect,
                    report.se_total,
                    report.direct_effect,
                    report.se_direct,
                    report.proportion_mediated,
                    report.se_proportion,
                    report.ci_lower,
                    report.ci_upper,
                ]
                .iter()
                .map(|&x| fmt_g(x))
                .collect(),
            );
            t.render()
        }
    };
    emit(&text, args.output.as_deref())
}
