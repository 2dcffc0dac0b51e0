use thiserror::Error;

use scale_evolve::Error as CoreError;

/// Failures of a command, each tied to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or arguments.
    #[error("usage: {0}")]
    Usage(String),
    /// Model file that cannot be read or does not describe a valid model.
    #[error("config: {0}")]
    Config(String),
    /// Numerical failure reported by the library.
    #[error("{0}")]
    Compute(CoreError),
    #[error("i/o: {0}")]
    Io(String),
    /// The verify suite ran but some criteria failed.
    #[error("{0} verification criteria failed")]
    VerifyFailed(usize),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidScalePair { .. } | CoreError::TimeOrderViolation { .. } | CoreError::InvalidInput(_) => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Compute(e),
        }
    }
}

impl CliError {
    /// 2 for usage and configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
