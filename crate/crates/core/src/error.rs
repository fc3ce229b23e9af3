use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {location}: {message}")]
    Record { location: String, message: String },

    #[error("{rejected} of {total} records rejected (limit 1%); first: {first}")]
    TooManyRejected {
        rejected: usize,
        total: usize,
        first: String,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("segment of length {len} exceeds the positional table ({max_pos})")]
    SegmentTooLong { len: usize, max_pos: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch: checkpoint {checkpoint}, vocabulary {vocabulary}")]
    VocabMismatch {
        checkpoint: String,
        vocabulary: String,
    },

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("insufficient pairs: {nonzero} nonzero differences, need at least 5")]
    InsufficientPairs { nonzero: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
