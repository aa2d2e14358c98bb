//! Simulation of proportion-mediated estimation.
//!
//! The total effect of X1 comes from a univariable fit on the variants with
//! no direct effect on X2; the direct effect comes from the two-exposure fit
//! on all variants.

use serde::Serialize;

use super::monte_carlo::{fit_method, run_indexed, simulate_replication, MonteCarloOptions};
use super::scenario::{ScenarioSpec, MEDIATION_NULL_VARIANTS};
use crate::data::{CausalEstimate, Method};
use crate::error::{Error, Result};
use crate::ivw::fit_ivw_univariable_with;
use crate::mediation::{mediation_from_effects, MediationResult};
use crate::mle::{fit_mle, MleOptions};
use crate::stats::median;

/// Grid of direct effects of X1.
pub const THETA1_GRID: [f64; 2] = [0.0, 0.1];
/// Grid of measurement-error variances on X1.
pub const SIGMA_ZETA1_GRID: [f64; 2] = [0.0, 1.0];
/// Grid of measurement-error variances on X2.
pub const SIGMA_ZETA2_GRID: [f64; 4] = [0.0, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediationCell {
    pub theta1: f64,
    pub sigma_zeta_sq: [f64; 2],
    pub method: Method,
    pub true_total_effect: f64,
    pub true_proportion: f64,
    pub median_total_effect: f64,
    pub median_direct_effect: f64,
    pub median_proportion: f64,
    /// Share of proportion-mediated intervals containing the true value.
    pub coverage: f64,
    pub successes: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<MediationRecord>>,
}

/// Mediation estimate of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediationRecord {
    pub replication: usize,
    pub result: Option<MediationResult>,
    pub error: Option<String>,
}

/// Univariable fit of X1 on the leading variants, matching `method`.
fn fit_total(data: &super::monte_carlo::ReplicationData, method: Method, options: &MonteCarloOptions) -> Result<CausalEstimate> {
    let leading: Vec<usize> = (0..MEDIATION_NULL_VARIANTS).collect();
    let ds = &data.summary.dataset;
    match method {
        Method::Ivw => fit_ivw_univariable_with(&ds.subset(&leading, &[0, 1])?, 0, &options.ivw),
        Method::Mle | Method::MleCor => fit_mle(
            &ds.subset(&leading, &[0])?,
            &MleOptions {
                seed: data.estimation_seed,
                ..options.mle
            },
        ),
        Method::IvwUnivariable => Err(Error::InvalidOption(format!("{method} is not a two-exposure method"))),
    }
}

/// Mediation estimates for one replication and each method in `options`.
pub fn mediation_replication(spec: &ScenarioSpec, index: usize, options: &MonteCarloOptions) -> Vec<Result<MediationResult>> {
    let data = match simulate_replication(spec, index, false) {
        Ok(d) => d,
        Err(e) => return options.methods.iter().map(|_| Err(e.clone())).collect(),
    };
    options
        .methods
        .iter()
        .map(|&method| {
            let total = fit_total(&data, method, options)?;
            let direct = fit_method(&data, method, options)?;
            mediation_from_effects(total.theta[0], total.se(0), direct.theta[0], direct.se(0))
        })
        .collect()
}

/// Runs one mediation configuration and summarises each method.
pub fn run_mediation_cell(spec: &ScenarioSpec, replications: usize, options: &MonteCarloOptions) -> Result<Vec<MediationCell>> {
    spec.validate()?;
    options.validate()?;
    if !spec.mediation_mode {
        return Err(Error::InvalidScenario("mediation study requires mediation_mode".into()));
    }
    if replications == 0 {
        return Err(Error::InvalidOption("replications must be >= 1".into()));
    }
    let per_rep = run_indexed(options.workers, replications, |i| mediation_replication(spec, i, options))?;
    let truth = spec.true_proportion_mediated();
    Ok(options
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let ok: Vec<&MediationResult> = per_rep.iter().filter_map(|r| r[m].as_ref().ok()).collect();
            let pick = |f: &dyn Fn(&MediationResult) -> f64| median(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let covered = ok.iter().filter(|r| r.ci.0 <= truth && truth <= r.ci.1).count();
            MediationCell {
                theta1: spec.theta[0],
                sigma_zeta_sq: spec.sigma_zeta_sq,
                method,
                true_total_effect: spec.total_effect(),
                true_proportion: truth,
                median_total_effect: pick(&|r| r.total_effect),
                median_direct_effect: pick(&|r| r.direct_effect),
                median_proportion: pick(&|r| r.proportion_mediated),
                coverage: if ok.is_empty() { f64::NAN } else { covered as f64 / ok.len() as f64 },
                successes: ok.len(),
                failures: replications - ok.len(),
                raw: options.keep_raw.then(|| {
                    per_rep
                        .iter()
                        .enumerate()
                        .map(|(i, r)| MediationRecord {
                            replication: i,
                            result: r[m].as_ref().ok().copied(),
                            error: r[m].as_ref().err().map(|e| e.to_string()),
                        })
                        .collect()
                }),
            }
        })
        .collect())
}

/// Full grid over the direct effect of X1 and both error variances.
pub fn run_mediation_study(seed: u64, replications: usize, options: &MonteCarloOptions) -> Result<Vec<MediationCell>> {
    let mut out = Vec::new();
    for &t1 in &THETA1_GRID {
        for &s1 in &SIGMA_ZETA1_GRID {
            for &s2 in &SIGMA_ZETA2_GRID {
                out.extend(run_mediation_cell(&ScenarioSpec::mediation(t1, s1, s2, seed), replications, options)?);
            }
        }
    }
    Ok(out)
}
