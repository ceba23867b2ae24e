use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum GllvmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("fit failed: {0}")]
    FitFailure(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("model format version {found} is not readable by this build (expected {expected})")]
    Version { found: String, expected: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GllvmError>;
