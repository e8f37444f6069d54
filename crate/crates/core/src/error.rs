use thiserror::Error;

/// Errors from the core numerics.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("lower bound exceeds upper bound at {point:?}: l={lower}, u={upper}")]
    BoundViolation {
        point: Vec<f64>,
        lower: f64,
        upper: f64,
    },

    #[error("degenerate bound mass: {0}")]
    DegenerateMass(String),

    #[error("quadrature residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    IntegrationFailure { residual: f64, tol: f64 },

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported prior family: {0}")]
    UnsupportedFamily(String),

    #[error("non-finite summary from simulator {model} at theta {theta:?}")]
    NonFiniteSummary { model: String, theta: Vec<f64> },

    #[error("dropped {dropped} of {attempts} simulations ({rate:.2}% > 1%)")]
    ExcessiveDropRate {
        dropped: usize,
        attempts: usize,
        rate: f64,
    },

    #[error("quadrature did not converge: relative change {0:.3e}")]
    QuadratureNotConverged(f64),

    #[error("kernel bandwidth failure: {0}")]
    BandwidthFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
