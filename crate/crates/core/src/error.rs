use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the localization engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("ray origin ({x:.4}, {y:.4}) lies inside a wall cell")]
    OccupiedOrigin { x: f64, y: f64 },

    #[error("position ({x:.4}, {y:.4}) is outside the map")]
    OutOfBounds { x: f64, y: f64 },

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mining exhausted after {attempts} attempts: {what}")]
    MiningExhausted { what: String, attempts: usize },

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    TrainingFailure { epoch: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}

pub(crate) use ensure;
