use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mvmr_me::sim::{
    run_mediation_cell, run_monte_carlo, MediationCell, MonteCarloOptions, MonteCarloSummary, Outcome, Scenario,
    ScenarioSpec,
};
use mvmr_me::{IvwOptions, Method, MleOptions};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{emit, fmt_g, to_json, Format, Table, SCHEMA_VERSION};
use crate::MethodArg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    #[value(name = "S1", alias = "s1")]
    S1,
    #[value(name = "S2", alias = "s2")]
    S2,
    #[value(name = "S3", alias = "s3")]
    S3,
    Mediation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeArg {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IvwSe {
    Fixed,
    Random,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// Master seed; every grid cell reuses it.
    #[arg(long)]
    pub seed: u64,
    /// Effect of X1 on X2 (comma-separated grid). Fixed at 0.6 for mediation.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.4, 0.6])]
    pub rho: Vec<f64>,
    /// Measurement error variance of X1 (comma-separated grid).
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 4.0])]
    pub sigma_zeta1_sq: Vec<f64>,
    /// Measurement error variance of X2 (comma-separated grid). Defaults to
    /// the scenario's value, or 0,1,2,4 for mediation.
    #[arg(long, value_delimiter = ',')]
    pub sigma_zeta2_sq: Option<Vec<f64>>,
    /// Direct effect of X1 for mediation (comma-separated grid).
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1])]
    pub theta1: Vec<f64>,
    #[arg(long, value_enum, default_value_t = OutcomeArg::Continuous)]
    pub outcome: OutcomeArg,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "MVMR_ME_WORKERS")]
    pub workers: Option<usize>,
    /// Individuals per sample.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of variants.
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Ivw, MethodArg::Mle, MethodArg::MleCor])]
    pub methods: Vec<MethodArg>,
    /// Also report mean F and conditional F statistics.
    #[arg(long)]
    pub f_stats: bool,
    #[arg(long, value_enum, default_value_t = IvwSe::Fixed)]
    pub ivw_se: IvwSe,
    /// Write per-replication estimates to this CSV file.
    #[arg(long)]
    pub emit_raw: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct StudyReport<T> {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    replications: usize,
    cells: Vec<T>,
}

fn options(args: &SimulateArgs) -> CliResult<MonteCarloOptions> {
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let o = MonteCarloOptions {
        workers,
        methods: args.methods.iter().map(|&m| Method::from(m)).collect(),
        mle: MleOptions::default(),
        ivw: IvwOptions {
            random_effects: args.ivw_se == IvwSe::Random,
        },
        f_statistics: args.f_stats,
        keep_raw: args.emit_raw.is_some(),
    };
    o.validate()?;
    Ok(o)
}

fn sized(mut spec: ScenarioSpec, args: &SimulateArgs) -> ScenarioSpec {
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(j) = args.j {
        spec.n_variants = j;
    }
    spec
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Internal(format!("cannot write raw output: {e}"))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.16e}"))
}

fn write_raw_scenarios(path: &Path, cells: &[MonteCarloSummary]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record([
        "cell", "rho", "sigma_zeta1_sq", "sigma_zeta2_sq", "replication", "method", "estimate1", "estimate2", "se1",
        "se2", "converged", "error",
    ])
    .map_err(csv_error)?;
    for (c, cell) in cells.iter().enumerate() {
        for r in cell.raw.iter().flatten() {
            w.write_record([
                c.to_string(),
                cell.spec.rho.to_string(),
                cell.spec.sigma_zeta_sq[0].to_string(),
                cell.spec.sigma_zeta_sq[1].to_string(),
                r.replication.to_string(),
                r.method.to_string(),
                opt(r.estimate.map(|e| e[0])),
                opt(r.estimate.map(|e| e[1])),
                opt(r.se.map(|e| e[0])),
                opt(r.se.map(|e| e[1])),
                r.converged.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| CliError::Internal(format!("cannot write raw output: {e}")))
}

fn write_raw_mediation(path: &Path, cells: &[MediationCell]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record([
        "theta1",
        "sigma_zeta1_sq",
        "sigma_zeta2_sq",
        "replication",
        "method",
        "total_effect",
        "se_total",
        "direct_effect",
        "se_direct",
        "proportion_mediated",
        "se_proportion",
        "ci_lower",
        "ci_upper",
        "error",
    ])
    .map_err(csv_error)?;
    for cell in cells {
        for r in cell.raw.iter().flatten() {
            let res = r.result.as_ref();
            let field = |f: fn(&mvmr_me::MediationResult) -> f64| opt(res.map(f));
            w.write_record([
                cell.theta1.to_string(),
                cell.sigma_zeta_sq[0].to_string(),
                cell.sigma_zeta_sq[1].to_string(),
                r.replication.to_string(),
                cell.method.to_string(),
                field(|m| m.total_effect),
                field(|m| m.se_total),
                field(|m| m.direct_effect),
                field(|m| m.se_direct),
                field(|m| m.proportion_mediated),
                field(|m| m.se_proportion),
                field(|m| m.ci.0),
                field(|m| m.ci.1),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| CliError::Internal(format!("cannot write raw output: {e}")))
}

fn scenario_table(cells: &[MonteCarloSummary], label: &str) -> String {
    let mut t = Table::new(&[
        "scenario",
        "outcome",
        "rho",
        "sigma_zeta1_sq",
        "sigma_zeta2_sq",
        "method",
        "coefficient",
        "true_value",
        "median",
        "mean",
        "sd",
        "mean_se",
        "coverage",
        "rejection",
        "successes",
        "failures",
        "non_converged",
        "mean_f",
        "mean_conditional_f",
        "prevalence",
    ]);
    for cell in cells {
        let outcome = match cell.spec.outcome {
            Outcome::Continuous => "continuous",
            Outcome::Binary { .. } => "binary",
        };
        for m in &cell.methods {
            for (k, c) in m.coefficients.iter().enumerate() {
                t.push(vec![
                    label.to_string(),
                    outcome.to_string(),
                    fmt_g(cell.spec.rho),
                    fmt_g(cell.spec.sigma_zeta_sq[0]),
                    fmt_g(cell.spec.sigma_zeta_sq[1]),
                    m.method.to_string(),
                    format!("theta{}", k + 1),
                    fmt_g(c.true_value),
                    fmt_g(c.median),
                    fmt_g(c.mean),
                    fmt_g(c.sd),
                    fmt_g(c.mean_se),
                    fmt_g(c.coverage),
                    fmt_g(c.rejection),
                    m.successes.to_string(),
                    m.failures.to_string(),
                    m.non_converged.to_string(),
                    cell.mean_f.map_or("NA".into(), |f| fmt_g(f[k])),
                    cell.mean_conditional_f.map_or("NA".into(), |f| fmt_g(f[k])),
                    cell.mean_prevalence.map_or("NA".into(), fmt_g),
                ]);
            }
        }
    }
    t.render()
}

fn mediation_table(cells: &[MediationCell]) -> String {
    let mut t = Table::new(&[
        "theta1",
        "sigma_zeta1_sq",
        "sigma_zeta2_sq",
        "method",
        "true_total_effect",
        "true_proportion",
        "median_total_effect",
        "median_direct_effect",
        "median_proportion",
        "coverage",
        "successes",
        "failures",
    ]);
    for c in cells {
        t.push(vec![
            fmt_g(c.theta1),
            fmt_g(c.sigma_zeta_sq[0]),
            fmt_g(c.sigma_zeta_sq[1]),
            c.method.to_string(),
            fmt_g(c.true_total_effect),
            fmt_g(c.true_proportion),
            fmt_g(c.median_total_effect),
            fmt_g(c.median_direct_effect),
            fmt_g(c.median_proportion),
            fmt_g(c.coverage),
            c.successes.to_string(),
            c.failures.to_string(),
        ]);
    }
    t.render()
}

fn engine_error(e: mvmr_me::Error) -> CliError {
    match CliError::from(e) {
        CliError::Input(m) => CliError::Input(m),
        other => CliError::Estimation(format!("simulation failed: {other}")),
    }
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let opts = options(&args)?;
    if args.reps == 0 {
        return Err(CliError::Input("--reps must be at least 1".into()));
    }
    let text = if args.scenario == ScenarioArg::Mediation {
        if args.outcome == OutcomeArg::Binary {
            return Err(CliError::Input("the mediation study supports continuous outcomes only".into()));
        }
        let s2_grid = args.sigma_zeta2_sq.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0]);
        let mut cells = Vec::new();
        for &t1 in &args.theta1 {
            for &s1 in &args.sigma_zeta1_sq {
                for &s2 in &s2_grid {
                    let spec = sized(ScenarioSpec::mediation(t1, s1, s2, args.seed), &args);
                    cells.extend(run_mediation_cell(&spec, args.reps, &opts).map_err(engine_error)?);
                }
            }
        }
        if let Some(p) = &args.emit_raw {
            write_raw_mediation(p, &cells)?;
        }
        for c in &mut cells {
            c.raw = None;
        }
        match args.format {
            Format::Json => to_json(&StudyReport {
                schema_version: SCHEMA_VERSION,
                command: "simulate",
                seed: args.seed,
                replications: args.reps,
                cells,
            })?,
            Format::Tsv => mediation_table(&cells),
        }
    } else {
        let scenario = match args.scenario {
            ScenarioArg::S1 => Scenario::S1,
            ScenarioArg::S2 => Scenario::S2,
            _ => Scenario::S3,
        };
        let s2_grid = args
            .sigma_zeta2_sq
            .clone()
            .unwrap_or_else(|| vec![scenario.sigma_zeta2_sq()]);
        let mut cells = Vec::new();
        for &rho in &args.rho {
            for &s1 in &args.sigma_zeta1_sq {
                for &s2 in &s2_grid {
                    let mut spec = match args.outcome {
                        OutcomeArg::Continuous => ScenarioSpec::scenario(scenario, rho, s1, args.seed),
                        OutcomeArg::Binary => ScenarioSpec::binary(scenario, rho, s1, args.seed),
                    };
                    spec.sigma_zeta_sq[1] = s2;
                    let spec = sized(spec, &args);
                    cells.push(run_monte_carlo(&spec, args.reps, &opts).map_err(engine_error)?);
                }
            }
        }
        if let Some(p) = &args.emit_raw {
            write_raw_scenarios(p, &cells)?;
        }
        for c in &mut cells {
            c.raw = None;
        }
        let label = format!("{scenario:?}");
        match args.format {
            Format::Json => to_json(&StudyReport {
                schema_version: SCHEMA_VERSION,
                command: "simulate",
                seed: args.seed,
                replications: args.reps,
                cells,
            })?,
            Format::Tsv => scenario_table(&cells, &label),
        }
    };
    emit(&text, args.output.as_deref())
}
