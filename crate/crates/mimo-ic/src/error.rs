use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid antenna configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("null space too small: need {needed}, found {found}")]
    InsufficientNullSpace { needed: usize, found: usize },
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
