//! Errors of the experiment runner and their exit codes.

use thiserror::Error;

/// Exit code when every assertion holds.
pub const EXIT_PASS: u8 = 0;
/// Exit code when an assertion fails or a run aborts numerically.
pub const EXIT_ASSERTION: u8 = 2;
/// Exit code for unreadable or invalid configs and violated preconditions.
pub const EXIT_CONFIG: u8 = 3;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("output error: {0}")]
    Output(String),
    #[error(transparent)]
    Core(#[from] mfl_core::Error),
}

impl LabError {
    /// Process exit code of this failure.
    ///
    /// Core errors that reject inputs before any computation (bad grids,
    /// parameters, hypotheses, files) count as config errors; failures raised
    /// during a run count as assertion failures.
    pub fn exit_code(&self) -> u8 {
        use mfl_core::Error as E;
        match self {
            LabError::Config(_) => EXIT_CONFIG,
            LabError::Assertion(_) | LabError::Output(_) => EXIT_ASSERTION,
            LabError::Core(e) => match e {
                E::InvalidGrid(_)
                | E::InvalidDensity(_)
                | E::GridMismatch(_)
                | E::DimensionUnsupported(_)
                | E::InvalidTime(_)
                | E::InvalidTau(_)
                | E::InvalidSigma(_)
                | E::NotEven(_)
                | E::HypothesisViolated(_)
                | E::InvalidParameter(_)
                | E::Parse(_) => EXIT_CONFIG,
                _ => EXIT_ASSERTION,
            },
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Output(e.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Output(e.to_string())
    }
}
