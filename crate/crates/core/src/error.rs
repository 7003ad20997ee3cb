use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SigaError>;

#[derive(Debug, Error)]
pub enum SigaError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    /// A second-order parameter left the region `nu <= 0` where the updates are defined.
    #[error("domain error: nu[{index}] = {value} is positive")]
    Domain { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear system is numerically singular: {0}")]
    Singular(String),

    #[error("fixed-point iteration did not reach residual {tol:e} within {iterations} iterations (residual {residual:e})")]
    NotConverged {
        tol: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl SigaError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SigaError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SigaError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        SigaError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
