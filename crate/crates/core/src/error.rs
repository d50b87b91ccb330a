use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh level must be at least 1, got {0}")]
    InvalidLevel(usize),

    #[error("levels {coarse} -> {fine} are not nested by doubling")]
    NonNestedLevels { coarse: usize, fine: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("non-positive diagonal entry in row {row}")]
    NonPositiveDiagonal { row: usize },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("constraint on non-existent node {0}")]
    UnknownNode(usize),

    #[error("node {0} is constrained more than once")]
    DuplicateConstraint(usize),

    #[error("step size underflow (mu = {mu:e}) at iteration {iteration} without an accepted step")]
    StepStall { iteration: usize, mu: f64 },

    #[error("unknown schedule `{0}`")]
    UnknownSchedule(String),

    #[error("error values must be positive, got {0}")]
    NonPositiveError(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
