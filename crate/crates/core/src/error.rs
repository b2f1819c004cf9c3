use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degree {degree} exceeds the admissible bound {bound}")]
    DegreeTooHigh { degree: usize, bound: usize },

    #[error("moment of degree {degree} is out of range for an order-{order} sequence (max degree {max})")]
    MomentOutOfRange { degree: usize, order: usize, max: usize },

    #[error("sub-order {k} exceeds sequence order {order}")]
    OrderTooHigh { k: usize, order: usize },

    #[error("relaxation order {order} is too small: need n >= {minimal} ({reason})")]
    OrderTooLow { order: usize, minimal: usize, reason: String },

    #[error("odd degree {0}: the polynomial is unbounded below")]
    OddDegree(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("atom extraction failed: {0}")]
    ExtractionFailed(String),

    #[error("minimizer recovery failed: {0}")]
    RecoveryFailed(String),

    #[error("dehomogenization discarded every atom (no atom with x0 != 0)")]
    EmptySupport,

    #[error("oracle found no feasible grid point")]
    NoFeasiblePoint,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("external solver adapter: {0}")]
    Adapter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
