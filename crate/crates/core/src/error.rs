use thiserror::Error;

/// Errors produced by grid construction, field operations and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("right side has nonzero mean {mean:e} (relative {relative:e}, limit {limit:e})")]
    NonZeroMean { mean: f64, relative: f64, limit: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("flow validation failed: {0}")]
    FlowInvalid(String),

    #[error("solver did not converge: {context} (residual {residual:e} after {iterations} iterations)")]
    NotConverged { context: String, residual: f64, iterations: usize },

    #[error("eigenfunction lost positivity: min/max = {min:e}/{max:e} after {iterations} iterations")]
    PositivityLost { min: f64, max: f64, iterations: usize },

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("unsupported dimension {dim} for {context}")]
    UnsupportedDim { dim: usize, context: &'static str },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed field container: {0}")]
    BadContainer(String),
}

pub type Result<T> = std::result::Result<T, Error>;
