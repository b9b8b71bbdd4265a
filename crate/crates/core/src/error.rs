use thiserror::Error;

/// Errors produced by the detection library.
#[derive(Debug, Error)]
pub enum Error {
    /// A dataset file could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The input held no usable rows.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A matrix or vector had the wrong dimensions.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// A parameter was outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    NonFinite(String),

    /// A persisted model file was malformed or carried an unknown version.
    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
