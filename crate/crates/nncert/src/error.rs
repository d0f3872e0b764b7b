use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("chart inverse did not converge within {max_iter} iterations (residual {residual:.3e})")]
    ChartInverse { max_iter: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("infeasible point: {0}")]
    Infeasible(String),

    #[error("hypothesis failure: {0}")]
    Hypothesis(String),

    #[error("coverage failure: no region covers {point:?}")]
    Coverage { point: Vec<f64> },

    #[error("non-isolated zeros suspected: {0}")]
    NonIsolated(String),

    #[error("construction failure: {0}")]
    Construction(String),

    #[error("residual check failed: {0}")]
    Residual(String),

    #[error("certificate format error: {0}")]
    Format(String),

    #[error("not nonnegative on the constraint set: f({point:?}) = {value}")]
    NotNonnegative { point: Vec<f64>, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
