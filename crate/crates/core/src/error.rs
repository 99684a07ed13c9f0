use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-positive absolute temperature {0}")]
    NonPositiveTemperature(f64),
    #[error("singular or inverted deformation (det F = {0})")]
    SingularDeformation(f64),
    #[error("tensor is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("grid too small: {0} nodes on an axis, need at least 3")]
    GridTooSmall(usize),
    #[error("unsupported spatial dimension {0}")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("boundary partition mismatch: {0}")]
    PartitionMismatch(String),
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("time step {dt} exceeds stability bound {bound}")]
    StabilityViolation { dt: f64, bound: f64 },
    #[error("bias temperature must be uniform for this check")]
    NonUniformBiasTemperature,
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("Laplace horizon too short: truncation estimate {estimate:e} exceeds budget {budget:e}")]
    InsufficientHorizon { estimate: f64, budget: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
