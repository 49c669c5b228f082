use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
