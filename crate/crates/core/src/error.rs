use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the tuner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("episode already terminated after {0} steps")]
    EpisodeTerminated(usize),

    #[error("computation graph already consumed by a previous backward pass")]
    GraphConsumed,

    #[error("closed loop went unstable (|y| = {0})")]
    Unstable(f64),

    #[error("too many non-finite probability ratios: {bad} of {total}")]
    NonFiniteRatios { bad: usize, total: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint does not match network config: {0}")]
    ShapeMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(x: f64, what: &'static str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
