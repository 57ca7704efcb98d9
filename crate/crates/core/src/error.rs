use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("pixel value {value} at index {index} lies outside the {range} range")]
    RangeViolation {
        value: f64,
        index: usize,
        range: &'static str,
    },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("age {0} is not covered by any age group bin")]
    AgeNotCovered(f64),

    #[error("invalid age bins: {0}")]
    InvalidBins(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("embedding difference has zero norm ({0}); direction is undefined")]
    DegenerateDirection(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend `{0}` is already registered")]
    DuplicateBackend(String),

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }
}
