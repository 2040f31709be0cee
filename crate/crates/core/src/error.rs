use thiserror::Error;

/// Errors produced by the feature-learning pipeline.
#[derive(Debug, Error)]
pub enum FealmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("retraction failed: {0}")]
    Retraction(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = FealmError> = std::result::Result<T, E>;

macro_rules! bail_arg {
    ($($arg:tt)*) => {
        return Err($crate::error::FealmError::InvalidArgument(format!($($arg)*)))
    };
}
pub(crate) use bail_arg;
