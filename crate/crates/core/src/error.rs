use thiserror::Error;

/// Errors raised by the library.
///
/// `InvalidInput` covers contract violations by the caller; every other
/// variant is a numerical or solver failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver did not converge: {message} (residual {residual:.3e})")]
    NoConvergence { message: String, residual: f64 },

    #[error("no branch reached the residual tolerance {tolerance:.3e}; best residual {best_residual:.3e}")]
    ResidualTooLarge { tolerance: f64, best_residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("term count {count} exceeds the cap {cap}; enable pruning or reduce cycles")]
    TermCap { count: usize, cap: usize },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for caller mistakes, false for numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidInput(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
