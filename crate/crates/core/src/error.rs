use alloc::boxed::Box;
use alloc::string::String;

use crate::matrix::SymMatrix;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// An iterative solver ran out of iterations. `last_iterate` carries the
    /// final estimate when the solver produces one.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64, last_iterate: Option<Box<SymMatrix>> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
