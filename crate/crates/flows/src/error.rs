use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite flow output: {0}")]
    NonFiniteOutput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] drbayes_core::CoreError),
}

pub type Result<T> = std::result::Result<T, FlowError>;
