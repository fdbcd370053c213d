use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label {value} for a class space of {num_classes} classes")]
    InvalidLabel { value: u8, num_classes: u8 },

    #[error("invalid class space: {0}")]
    ClassSpace(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("length error: expected {expected} bytes, found {actual}")]
    Length { expected: u64, actual: u64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate record for clip {clip_id:?} frame {frame_index}")]
    Duplicate { clip_id: String, frame_index: u32 },

    #[error("invalid manifest record on line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("source label map contains no valid class")]
    EmptySource,

    #[error("loss undefined: every pixel is ignored")]
    UndefinedLoss,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{failed} of {total} pairs failed, above the 10% failure budget")]
    FailureBudget { failed: usize, total: usize },

    /// Carries the inner message in its own text, so it reports no
    /// `source()`.
    #[error("{path}: {inner}")]
    File { path: PathBuf, inner: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Attach a path to an error raised while handling that file.
    pub(crate) fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            inner: Box::new(self),
        }
    }

    /// The innermost error, skipping any path context.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { inner, .. } => inner.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
