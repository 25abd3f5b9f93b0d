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

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: u64,
        field: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported sampling rate {fs} Hz (need at least {min} Hz)")]
    UnsupportedRate { fs: f64, min: f64 },

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("window [{start_s}, {end_s}) s lies outside the series extent")]
    OutOfBounds { start_s: f64, end_s: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("nothing to fuse")]
    EmptyFusion,

    #[error("correlation undefined: zero variance")]
    ZeroVariance,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
