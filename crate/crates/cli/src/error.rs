use std::io;
use std::path::Path;

use thiserror::Error;
use was_core::WasError;

/// Failures of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or input files. Exit code 1.
    #[error("{0}")]
    Invalid(String),

    /// A check ran and did not pass. Exit code 2.
    #[error("{0}")]
    Failed(String),

    #[error("{path}: {source}")]
    Output { path: String, source: io::Error },

    #[error(transparent)]
    Core(#[from] WasError),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Failed(_) | CliError::Output { .. } | CliError::Core(_) => 2,
        }
    }
}

/// Treats a missing or unreadable input file as invalid input rather than a
/// runtime failure.
pub fn input<T>(path: &Path, result: Result<T, WasError>) -> Result<T, CliError> {
    result.map_err(|e| match e {
        WasError::Io(io) => CliError::invalid(format!("{}: {io}", path.display())),
        other => CliError::Core(other),
    })
}
