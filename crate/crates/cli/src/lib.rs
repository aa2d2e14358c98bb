//! `mvmr-me`: multivariable Mendelian randomization with measurement error.
//!
//! Exit codes: 0 success, 2 invalid input or arguments, 3 estimation
//! failure, 4 internal or output error.

#![allow(clippy::needless_range_loop)]

mod bias;
pub mod error;
mod estimate;
pub mod input;
mod mediate;
pub mod output;
mod simulate;

use clap::{Parser, Subcommand, ValueEnum};
use mvmr_me::Method;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "mvmr-me", version, about = "Multivariable Mendelian randomization under measurement error")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate causal effects from summary statistics.
    Estimate(estimate::EstimateArgs),
    /// Plug-in moments and predicted IVW bias for two exposures.
    BiasDiagnose(bias::BiasArgs),
    /// Proportion of an exposure's effect mediated by the others.
    Mediate(mediate::MediateArgs),
    /// Monte Carlo study of the estimators.
    Simulate(simulate::SimulateArgs),
}

/// Estimator names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ivw,
    Mle,
    MleCor,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ivw => Method::Ivw,
            MethodArg::Mle => Method::Mle,
            MethodArg::MleCor => Method::MleCor,
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Estimate(a) => estimate::run(a),
        Command::BiasDiagnose(a) => bias::run(a),
        Command::Mediate(a) => mediate::run(a),
        Command::Simulate(a) => simulate::run(a),
    }
}
