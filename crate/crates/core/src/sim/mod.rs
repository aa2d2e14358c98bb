//! Simulation of two-sample summary statistics and Monte Carlo evaluation of
//! the estimators.

pub mod assoc;
pub mod dgp;
pub mod direct;
pub mod fstat;
pub mod mediation_study;
pub mod monte_carlo;
pub mod rng;
pub mod scenario;

pub use assoc::{summarize_associations, SimulatedSummary};
pub use dgp::{draw_variant_params, generate_sample, IndividualSample, VariantParams};
pub use direct::simulate_summary_direct;
pub use fstat::{f_statistics, FStatistics};
pub use mediation_study::{run_mediation_cell, run_mediation_study, MediationCell, MediationRecord};
pub use monte_carlo::{
    run_monte_carlo, simulate_replication, CoefficientSummary, MethodSummary, MonteCarloOptions,
    MonteCarloSummary, ReplicationRecord,
};
pub use rng::{replication_rng, StreamRole};
pub use scenario::{Outcome, Scenario, ScenarioSpec};
