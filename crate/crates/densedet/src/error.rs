//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes for an operation.
    #[error("{op}: shape mismatch: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// Temporal length too short for the requested operation.
    #[error("sequence too short: length {len}, need at least {min}")]
    SequenceTooShort { len: usize, min: usize },

    /// An operation was called outside its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed binary or text payload.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Synthetic data generation cannot satisfy the spec.
    #[error("generation error: {0}")]
    Generation(String),

    /// A forward pass produced NaN/Inf.
    #[error("non-finite value produced by op `{op}`")]
    NonFinite { op: String },

    /// Metric computation has no valid input.
    #[error("metrics error: {0}")]
    Metrics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for validation problems,
    /// 2 for runtime/numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
