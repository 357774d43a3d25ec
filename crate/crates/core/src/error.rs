use std::path::PathBuf;

use thiserror::Error;

use crate::labels::LabelParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// Chance agreement (or pooled variance) leaves the statistic undefined.
    #[error("degenerate marginals: statistic undefined")]
    DegenerateMarginals,

    #[error("{rejected} of {read} lines rejected (more than 10%)")]
    TooManyRejects { rejected: usize, read: usize },

    #[error(transparent)]
    LabelParse(#[from] LabelParseError),

    #[error("transport failure for post {post_id}: {message}")]
    Transport { post_id: String, message: String },

    #[error("batch aborted: {failures} of {total} posts failed")]
    BatchAborted { failures: usize, total: usize },

    #[error("power iteration did not converge after {iterations} iterations")]
    NotConverged { iterations: usize, last: Vec<f64> },

    #[error("gold set fingerprints differ ({left} vs {right})")]
    GoldMismatch { left: String, right: String },

    #[error("tuning and evaluation splits share {0} posts")]
    SplitOverlap(usize),

    #[error("missing {artifact}: run {producer} first")]
    MissingArtifact {
        artifact: String,
        producer: &'static str,
    },

    #[error("alignment gate failed: {}", .0.join("; "))]
    GateFailed(Vec<String>),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::File {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}
