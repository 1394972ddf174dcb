use thiserror::Error;

/// Errors produced by the harness.
#[derive(Debug, Error)]
pub enum HarError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("frame too short: {0}")]
    FrameTooShort(String),

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("rejected configuration: {0}")]
    RejectedConfig(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarError>;
