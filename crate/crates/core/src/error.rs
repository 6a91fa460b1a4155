use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid rank {rank} for a {rows}x{cols} matrix")]
    InvalidRank { rank: usize, rows: usize, cols: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not of rank <= {rank}: sigma_{{r+1}} = {sigma_next:e}, sigma_1 = {sigma_first:e}")]
    NotLowRank {
        rank: usize,
        sigma_next: f64,
        sigma_first: f64,
    },

    #[error("point is not a projected-gradient stationary point: {0}")]
    NotStationary(String),

    #[error("Hessian of size {size} exceeds the assembly cap {cap}; use probe-based checks instead")]
    HessianTooLarge { size: usize, cap: usize },

    #[error("invalid counterexample spec: {0}")]
    InvalidCounterexample(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
