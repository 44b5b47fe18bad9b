use std::ops::Range;

use thiserror::Error;

pub type Result<T, E = GsaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GsaError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("requested {requested} dimensions but the direction-number table holds {available}")]
    Capacity { requested: usize, available: usize },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("model evaluation failed for runs {}..{}: {message}", range.start, range.end)]
    Evaluation {
        range: Range<usize>,
        message: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GsaError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        GsaError::Argument(msg.into())
    }
}
