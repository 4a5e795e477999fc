use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, WasError>;

/// Errors raised anywhere in the library.
///
/// [`WasError::is_validation`] separates bad inputs and configuration from
/// runtime or numerical failures; the command-line front end maps the two
/// groups onto distinct exit codes.
#[derive(Debug, Error)]
pub enum WasError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("row {row} has no finite entry (every position is masked)")]
    DegenerateRow { row: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("targets misaligned: {targets} targets for {frames} frames")]
    Alignment { targets: usize, frames: usize },

    #[error("sequence of {frames} frames is shorter than stride {stride}")]
    EmptyOutput { frames: usize, stride: usize },

    #[error("no utterance reaches query position {position}")]
    EmptyProfile { position: usize },

    #[error("training diverged at update {update}: loss = {loss}")]
    Divergence { update: usize, loss: f64 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl WasError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        WasError::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        WasError::Config(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        WasError::Format {
            what,
            detail: detail.into(),
        }
    }

    /// True for errors caused by invalid user input rather than by a failure
    /// during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            WasError::Config(_)
                | WasError::Alignment { .. }
                | WasError::Format { .. }
                | WasError::Json(_)
        )
    }
}
