use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or invalid input. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// An estimator or the simulation engine failed. Exit code 3.
    #[error("{0}")]
    Estimation(String),
    /// Anything else, including output I/O. Exit code 4.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<mvmr_me::Error> for CliError {
    fn from(e: mvmr_me::Error) -> Self {
        use mvmr_me::Error as E;
        match e {
            E::DimensionMismatch(_)
            | E::InvalidCorrelation(_)
            | E::UnsupportedDimension { .. }
            | E::ExposureIndex { .. }
            | E::InvalidScenario(_)
            | E::InvalidOption(_) => CliError::Input(e.to_string()),
            E::SingularGram { .. }
            | E::SingularInformation { .. }
            | E::NuisanceUpdate { .. }
            | E::DegenerateCollinearity(_)
            | E::ZeroTotalEffect(_)
            | E::MonomorphicVariant(_)
            | E::Logistic { .. }
            | E::RankDeficientGenotypes => CliError::Estimation(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
