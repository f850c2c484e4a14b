use thiserror::Error;

/// Errors produced by grid construction, functional evaluation and the
/// numerical algorithms built on top of them.
///
/// `InvalidParameter` marks rejected inputs (caller mistakes), everything
/// else reports a numerical failure of an otherwise valid computation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two zonal functions (or a function and an operator) live on
    /// different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A quantity that must be strictly positive was not.
    #[error("positivity violated: {0}")]
    Positivity(String),

    /// An iterative solver failed to converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A parameter combination the formulas degenerate at.
    #[error("unsupported case: {0}")]
    Unsupported(String),

    /// Any other numerical failure (singular solve, NaN, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
