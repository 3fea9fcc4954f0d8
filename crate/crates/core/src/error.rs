use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("need at least 2 frames, found {found}")]
    InsufficientFrames { found: usize },

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("SVD did not converge for {mode} slice {index} (channel {channel})")]
    NumericFailure {
        mode: String,
        index: usize,
        channel: usize,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("invalid state transition: {0}")]
    InvalidTransition(String),

    #[error("nothing selected")]
    NothingSelected,

    #[error("manifest error: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Decode { .. } => "decode",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InsufficientFrames { .. } => "insufficient_frames",
            Error::Bounds(_) => "bounds",
            Error::Parameter(_) => "parameter",
            Error::NumericFailure { .. } => "numeric_failure",
            Error::NotFound(_) => "not_found",
            Error::Conflict(_) => "conflict",
            Error::InvalidTransition(_) => "invalid_transition",
            Error::NothingSelected => "nothing_selected",
            Error::Manifest(_) => "manifest",
        }
    }
}
