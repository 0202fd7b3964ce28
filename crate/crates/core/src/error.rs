use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge on [{lower}, {upper}]: requested tolerance {requested:e}, achieved {achieved:e}")]
    Quadrature {
        lower: f64,
        upper: f64,
        requested: f64,
        achieved: f64,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("insufficient events: need at least {needed}, got {got}")]
    InsufficientEvents { needed: usize, got: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
