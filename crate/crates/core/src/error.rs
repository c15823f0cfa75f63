use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum TdaError {
    #[error("input shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("non-finite value for sample {sample}: {what}")]
    NonFinite { sample: usize, what: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (residual norm {residual_norm:.3e})")]
    Convergence { sweeps: usize, residual_norm: f64 },

    #[error("loss became NaN at epoch {epoch}")]
    NanLoss { epoch: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("schema error in column `{column}`: {message}")]
    Schema { column: String, message: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl TdaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TdaError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, TdaError>;
