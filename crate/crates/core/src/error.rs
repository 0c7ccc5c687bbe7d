use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("domain error at node {node}: {message}")]
    Domain { node: usize, message: String },

    #[error("flow extinct at t = {t} (scale would be {scale})")]
    Extinction { t: f64, scale: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
