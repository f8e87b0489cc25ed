//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands with incompatible shapes; names both.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An index (class label, example index, ...) outside its valid range.
    #[error("{what} {index} out of range (< {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    /// A caller broke an API precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced a non-finite value; carries the step index.
    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: &'static str, step: usize },

    /// Training hit a non-finite loss; carries the epoch/batch coordinates.
    #[error("training aborted: non-finite loss at epoch {epoch}, batch {batch}")]
    TrainAbort { epoch: usize, batch: usize },

    /// Malformed serialized data (bad magic, bad counts, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Input ended before the declared payload.
    #[error("truncated input: needed {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },

    /// Input that is structurally valid but carries no usable signal.
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
