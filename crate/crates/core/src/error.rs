use alloc::string::String;
use core::fmt;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value violates a documented precondition.
    InvalidParameter { name: &'static str, reason: String },
    /// Sizes of two inputs disagree.
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    /// Cholesky factorization failed even after diagonal jitter.
    NotPositiveDefinite { min_eigenvalue: f64 },
    /// A linear system could not be solved.
    Singular { what: &'static str },
    /// Training produced a non-finite loss.
    Diverged { epoch: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected}, found {found}")
            }
            Error::NotPositiveDefinite { min_eigenvalue } => {
                write!(f, "covariance is not positive definite after jitter (smallest eigenvalue {min_eigenvalue:e})")
            }
            Error::Singular { what } => write!(f, "singular system: {what}"),
            Error::Diverged { epoch } => write!(f, "training diverged at epoch {epoch}"),
        }
    }
}

impl core::error::Error for Error {}
