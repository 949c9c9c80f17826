use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum SdspcaError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// The objective became NaN or infinite during a fit.
    #[error("numeric divergence at iteration {iteration}: objective is {value}")]
    Divergence { iteration: usize, value: f64 },

    #[error("out of range: {0}")]
    Range(String),

    #[error("{path}: line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, SdspcaError>;

pub(crate) fn shape_err(msg: impl Into<String>) -> SdspcaError {
    SdspcaError::Shape(msg.into())
}
