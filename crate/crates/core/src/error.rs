use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measures or graphons live on different weight spaces")]
    SpaceMismatch,

    #[error("invalid weight space: {0}")]
    InvalidSpace(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid graphon: {0}")]
    InvalidGraphon(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("support failure at cell ({row}, {col}), point {point}: {reason}")]
    Support {
        row: usize,
        col: usize,
        point: usize,
        reason: &'static str,
    },

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("event has probability zero")]
    ZeroProbability,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
