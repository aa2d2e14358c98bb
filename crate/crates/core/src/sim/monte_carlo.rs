//! Monte Carlo replication engine and aggregation.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::assoc::{summarize_associations, SimulatedSummary};
use super::dgp::{draw_variant_params, generate_sample};
use super::fstat::{f_statistics, FStatistics};
use super::rng::{replication_rng, StreamRole};
use super::scenario::ScenarioSpec;
use crate::data::{CausalEstimate, Method};
use crate::error::{Error, Result};
use crate::ivw::{fit_ivw_with, IvwOptions};
use crate::mle::{fit_mle, MleOptions};
use crate::stats::{mean, median, sample_sd};

/// Methods fitted by default: IVW, diagonal MLE and MLE with the sample
/// trait correlation.
pub const DEFAULT_METHODS: [Method; 3] = [Method::Ivw, Method::Mle, Method::MleCor];

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOptions {
    /// Worker threads; results do not depend on this.
    pub workers: usize,
    pub methods: Vec<Method>,
    pub mle: MleOptions,
    /// IVW standard errors. Fixed-effect by default; the multiplicative
    /// random-effects inflation is available for sensitivity analyses.
    pub ivw: IvwOptions,
    /// Also compute F and conditional F statistics per replication.
    pub f_statistics: bool,
    /// Keep per-replication estimates in the summary.
    pub keep_raw: bool,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            methods: DEFAULT_METHODS.to_vec(),
            mle: MleOptions::default(),
            ivw: IvwOptions::default(),
            f_statistics: false,
            keep_raw: false,
        }
    }
}

impl MonteCarloOptions {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidOption("workers must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidOption("at least one method is required".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| **m == Method::IvwUnivariable) {
            return Err(Error::InvalidOption(format!("{m} is not a two-exposure method")));
        }
        self.mle.validate()
    }
}

/// Data for one replication, before any estimator runs.
#[derive(Debug, Clone)]
pub struct ReplicationData {
    pub index: usize,
    pub summary: SimulatedSummary,
    pub f_statistics: Option<FStatistics>,
    /// Clamped outcome probabilities in the outcome sample.
    pub clamped: usize,
    /// Seed handed to estimators with their own randomness.
    pub estimation_seed: u64,
}

/// Generates both samples of replication `index` and reduces them to summary
/// statistics.
pub fn simulate_replication(spec: &ScenarioSpec, index: usize, with_f: bool) -> Result<ReplicationData> {
    let rep = index as u64;
    let params = draw_variant_params(spec, &mut replication_rng(spec.seed, rep, StreamRole::Parameters));
    let exposure = generate_sample(spec, &params, &mut replication_rng(spec.seed, rep, StreamRole::ExposureSample));
    let outcome = generate_sample(spec, &params, &mut replication_rng(spec.seed, rep, StreamRole::OutcomeSample));
    let summary = summarize_associations(&exposure, &outcome, spec)?;
    let f = if with_f { Some(f_statistics(&exposure)?) } else { None };
    let estimation_seed = replication_rng(spec.seed, rep, StreamRole::Estimation).next_u64();
    Ok(ReplicationData {
        index,
        summary,
        f_statistics: f,
        clamped: outcome.clamped,
        estimation_seed,
    })
}

/// Fits one two-exposure method to a simulated replication.
pub fn fit_method(data: &ReplicationData, method: Method, options: &MonteCarloOptions) -> Result<CausalEstimate> {
    let mle = MleOptions {
        seed: data.estimation_seed,
        ..options.mle
    };
    match method {
        Method::Ivw => fit_ivw_with(&data.summary.dataset, &options.ivw),
        Method::Mle => fit_mle(&data.summary.dataset, &mle),
        Method::MleCor => fit_mle(&data.summary.with_correlation()?, &mle),
        Method::IvwUnivariable => Err(Error::InvalidOption(format!("{method} is not a two-exposure method"))),
    }
}

/// Runs `f` over replication indices on a pool of `workers` threads and
/// returns results in index order.
pub(crate) fn run_indexed<T, F>(workers: usize, replications: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidOption(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..replications).into_par_iter().map(&f).collect()))
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub method: Method,
    pub estimate: Option<[f64; 2]>,
    pub se: Option<[f64; 2]>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub true_value: f64,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    /// Share of 95% intervals containing the true value.
    pub coverage: f64,
    /// Share of replications rejecting a zero effect at the 5% level.
    pub rejection: f64,
    pub mean_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub coefficients: Vec<CoefficientSummary>,
    /// Replications where the method returned an estimate.
    pub successes: usize,
    /// Replications where the method or the data generation failed.
    pub failures: usize,
    /// Successful replications whose best start did not meet tolerance;
    /// these are included in the aggregates.
    pub non_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub spec: ScenarioSpec,
    pub replications: usize,
    pub methods: Vec<MethodSummary>,
    /// Mean F statistics across replications, when requested.
    pub mean_f: Option<[f64; 2]>,
    pub mean_conditional_f: Option<[f64; 2]>,
    /// Mean exposure-sample correlation of the measured exposures.
    pub mean_trait_correlation: f64,
    /// Mean outcome prevalence, for binary outcomes.
    pub mean_prevalence: Option<f64>,
    pub clamped_probabilities: usize,
    /// Replications whose data could not be summarised.
    pub data_failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<ReplicationRecord>>,
}

impl MonteCarloSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

struct ReplicationOutcome {
    trait_correlation: Option<f64>,
    prevalence: Option<f64>,
    f: Option<FStatistics>,
    clamped: usize,
    records: Vec<ReplicationRecord>,
}

fn run_one(spec: &ScenarioSpec, index: usize, options: &MonteCarloOptions) -> ReplicationOutcome {
    match simulate_replication(spec, index, options.f_statistics) {
        Ok(data) => {
            let records = options
                .methods
                .iter()
                .map(|&method| match fit_method(&data, method, options) {
                    Ok(est) => ReplicationRecord {
                        replication: index,
                        method,
                        estimate: Some([est.theta[0], est.theta[1]]),
                        se: Some([est.se(0), est.se(1)]),
                        converged: est.converged,
                        error: None,
                    },
                    Err(e) => failed_record(index, method, &e),
                })
                .collect();
            ReplicationOutcome {
                trait_correlation: Some(data.summary.trait_correlation),
                prevalence: data.summary.prevalence,
                f: data.f_statistics,
                clamped: data.clamped,
                records,
            }
        }
        Err(e) => ReplicationOutcome {
            trait_correlation: None,
            prevalence: None,
            f: None,
            clamped: 0,
            records: options.methods.iter().map(|&m| failed_record(index, m, &e)).collect(),
        },
    }
}

fn failed_record(index: usize, method: Method, e: &Error) -> ReplicationRecord {
    ReplicationRecord {
        replication: index,
        method,
        estimate: None,
        se: None,
        converged: false,
        error: Some(e.to_string()),
    }
}

fn summarize_coefficient(records: &[&ReplicationRecord], k: usize, truth: f64) -> CoefficientSummary {
    let est: Vec<f64> = records.iter().map(|r| r.estimate.unwrap()[k]).collect();
    let se: Vec<f64> = records.iter().map(|r| r.se.unwrap()[k]).collect();
    let n = est.len() as f64;
    let share = |pred: &dyn Fn(f64, f64) -> bool| {
        if est.is_empty() {
            f64::NAN
        } else {
            est.iter().zip(&se).filter(|(e, s)| pred(**e, **s)).count() as f64 / n
        }
    };
    let z = crate::stats::Z_975;
    CoefficientSummary {
        true_value: truth,
        median: median(&est),
        mean: mean(&est),
        sd: sample_sd(&est),
        coverage: share(&|e, s| (e - truth).abs() <= z * s),
        rejection: share(&|e, s| crate::stats::wald_p_value(e, s) < 0.05),
        mean_se: mean(&se),
    }
}

/// Runs `replications` replications of `spec` and aggregates each method's
/// performance. Individual failures are counted, never fatal.
pub fn run_monte_carlo(spec: &ScenarioSpec, replications: usize, options: &MonteCarloOptions) -> Result<MonteCarloSummary> {
    spec.validate()?;
    options.validate()?;
    if replications == 0 {
        return Err(Error::InvalidOption("replications must be >= 1".into()));
    }
    let outcomes = run_indexed(options.workers, replications, |i| run_one(spec, i, options))?;

    let data_failures = outcomes.iter().filter(|o| o.trait_correlation.is_none()).count();
    let methods = options
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let ok: Vec<&ReplicationRecord> = outcomes
                .iter()
                .map(|o| &o.records[m])
                .filter(|r| r.estimate.is_some())
                .collect();
            MethodSummary {
                method,
                coefficients: (0..2).map(|k| summarize_coefficient(&ok, k, spec.theta[k])).collect(),
                successes: ok.len(),
                failures: replications - ok.len(),
                non_converged: ok.iter().filter(|r| !r.converged).count(),
            }
        })
        .collect();

    let fs: Vec<FStatistics> = outcomes.iter().filter_map(|o| o.f).collect();
    let mean_pair = |get: &dyn Fn(&FStatistics) -> [f64; 2]| {
        (!fs.is_empty()).then(|| {
            [0, 1].map(|k| mean(&fs.iter().map(|f| get(f)[k]).collect::<Vec<_>>()))
        })
    };
    let corr: Vec<f64> = outcomes.iter().filter_map(|o| o.trait_correlation).collect();
    let prev: Vec<f64> = outcomes.iter().filter_map(|o| o.prevalence).collect();
    Ok(MonteCarloSummary {
        spec: spec.clone(),
        replications,
        methods,
        mean_f: mean_pair(&|f| f.f),
        mean_conditional_f: mean_pair(&|f| f.conditional_f),
        mean_trait_correlation: mean(&corr),
        mean_prevalence: (!prev.is_empty()).then(|| mean(&prev)),
        clamped_probabilities: outcomes.iter().map(|o| o.clamped).sum(),
        data_failures,
        raw: options
            .keep_raw
            .then(|| outcomes.into_iter().flat_map(|o| o.records).collect()),
    })
}
