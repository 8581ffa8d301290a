use std::fmt;

use crate::checkpoint::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two extents that must agree do not.
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: String,
        expected: usize,
        actual: usize,
    },

    /// A layer would produce an empty (or negative) extent.
    #[error("infeasible geometry at {layer}: {detail}")]
    InfeasibleGeometry { layer: String, detail: String },

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("degenerate feature: bin {bin} has zero variance")]
    DegenerateFeature { bin: usize },

    #[error("empty distribution: every class frequency is zero")]
    EmptyDistribution,

    #[error("language {0} has no frames")]
    EmptyLanguage(u16),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("incompatible {field}: expected {expected}, found {found}")]
    Incompatible {
        field: String,
        expected: String,
        found: String,
    },

    #[error("training diverged at step {step} (non-finite loss)")]
    Diverged {
        step: u64,
        last_good: Option<Box<Checkpoint>>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(axis: impl fmt::Display, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            axis: axis.to_string(),
            expected,
            actual,
        }
    }

    pub(crate) fn infeasible(layer: impl fmt::Display, detail: impl fmt::Display) -> Self {
        Error::InfeasibleGeometry {
            layer: layer.to_string(),
            detail: detail.to_string(),
        }
    }

    pub(crate) fn contract(msg: impl fmt::Display) -> Self {
        Error::Contract(msg.to_string())
    }

    pub(crate) fn format(offset: u64, msg: impl fmt::Display) -> Self {
        Error::Format {
            offset,
            message: msg.to_string(),
        }
    }

    pub(crate) fn incompatible(
        field: impl fmt::Display,
        expected: impl fmt::Display,
        found: impl fmt::Display,
    ) -> Self {
        Error::Incompatible {
            field: field.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
