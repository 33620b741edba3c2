use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the filter library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("invalid shape {rows}x{cols}")]
    InvalidShape { rows: usize, cols: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value out of range for {semantic} at pixel {index}: {value}")]
    OutOfRange { semantic: &'static str, index: usize, value: f64 },

    #[error("undefined statistic: {0}")]
    Undefined(&'static str),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed header {}: {reason}", .path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),

    #[error("truncated payload {}: expected {expected} bytes, found {found}", .path.display())]
    TruncatedPayload { path: PathBuf, expected: usize, found: usize },

    #[error("malformed calibration table: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
