use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Data(#[from] citf_core::DataError),
    #[error(transparent)]
    Nn(#[from] citf_nn::NnError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite {what} in epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { what: &'static str, epoch: usize, batch: usize, detail: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
