use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("division by zero at tape node {node}")]
    DivisionByZero { node: usize },
    #[error("non-finite value {value} at tape node {node}")]
    NonFinite { node: usize, value: f64 },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
}
