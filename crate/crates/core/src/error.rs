use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("scale constant c_min must lie in (0, 1), got {0}")]
    InvalidScale(f64),
    #[error("costs are undefined for an imperfect matching")]
    ImperfectMatching,
    #[error("instance size {n} exceeds the enumeration limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("operation requires a square instance, got {n}x{m}")]
    NotSquare { n: usize, m: usize },
    #[error("invalid cost matrix: {0}")]
    InvalidCostMatrix(String),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("invalid dataset spec: {0}")]
    InvalidDataset(String),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
