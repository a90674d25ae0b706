use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{0}")]
    Invalid(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> NnError {
    NnError::ShapeMismatch { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
}
