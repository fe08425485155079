use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no observed values")]
    EmptyObserved,

    #[error("timestamp overflow while rolling the calendar forward by {steps} steps")]
    TimeOverflow { steps: usize },

    #[error("malformed record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("truncated dataset: record {record} at byte offset {offset}")]
    Truncated { record: usize, offset: usize },

    #[error("covariance not positive definite after jitter escalation (final jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("{what}: retry cap of {attempts} exhausted")]
    RetryExhausted { what: &'static str, attempts: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate seasonal history: in-sample seasonal naive MAE is zero")]
    DegenerateSeasonalHistory,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
