use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension cap exceeded: {0}")]
    DimensionCap(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("numerical contract violation: {0}")]
    Numerical(String),

    #[error("empty pencil: {0}")]
    EmptyPencil(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
