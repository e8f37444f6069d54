use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("non-finite class ratio estimate: {0}")]
    NonFiniteRatio(String),

    #[error("degenerate class: the bound priors coincide, r(S) is constant")]
    DegenerateClass,

    #[error("ABC pool of {pool} is too small for {keep} kept replicates")]
    InsufficientAcceptance { pool: usize, keep: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Flow(#[from] drbayes_flows::FlowError),

    #[error(transparent)]
    Core(#[from] drbayes_core::CoreError),
}

pub type Result<T> = std::result::Result<T, InferError>;
