use thiserror::Error;

/// Errors raised by the numerical kernels and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("grid resolution too low: {0}")]
    ResolutionTooLow(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("sections fail to generate the fibre at point {point}")]
    BasePointFailure { point: usize },

    #[error("metric condition number {cond:e} at point {point} exceeds the limit")]
    Degenerate { point: usize, cond: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("step size {dt:e} exceeds the stability bound {bound:e}")]
    StabilityBound { dt: f64, bound: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
