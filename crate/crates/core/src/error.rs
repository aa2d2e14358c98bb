use thiserror::Error;

/// Errors raised by the estimators and the simulation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("singular weighted Gram matrix (smallest/largest pivot ratio {ratio:.3e})")]
    SingularGram { ratio: f64 },

    #[error("singular information matrix (condition number {condition:.3e})")]
    SingularInformation { condition: f64 },

    #[error("non-finite nuisance update at variant {variant}")]
    NuisanceUpdate { variant: usize },

    #[error("unsupported number of exposures: expected {expected}, got {got}")]
    UnsupportedDimension { expected: usize, got: usize },

    #[error("degenerate collinearity: |rho*| = {0} >= 1")]
    DegenerateCollinearity(f64),

    #[error("total effect estimate {0:e} is too close to zero")]
    ZeroTotalEffect(f64),

    #[error("exposure index {index} out of range for {k} exposures")]
    ExposureIndex { index: usize, k: usize },

    #[error("monomorphic variant {0}: zero genotype variance")]
    MonomorphicVariant(usize),

    #[error("logistic regression failed at variant {variant}: {reason}")]
    Logistic { variant: usize, reason: String },

    #[error("rank-deficient genotype matrix")]
    RankDeficientGenotypes,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),
}

pub type Result<T> = std::result::Result<T, Error>;
