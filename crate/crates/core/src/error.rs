use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the estimators and their supporting plumbing.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments, inconsistent dimensions, unparseable data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A Cholesky factorization met a non-positive pivot.
    #[error("numerical failure: {context} is not positive definite (pivot {pivot} failed)")]
    NumericalFailure { context: String, pivot: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn not_pd(context: impl Into<String>, pivot: usize) -> Self {
        Error::NumericalFailure {
            context: context.into(),
            pivot,
        }
    }

    /// True for [`Error::NumericalFailure`].
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalFailure { .. })
    }

    /// Replace the context of a numerical failure, leaving other variants untouched.
    pub(crate) fn with_context(self, context: impl FnOnce(&str) -> String) -> Self {
        match self {
            Error::NumericalFailure { context: old, pivot } => Error::NumericalFailure {
                context: context(&old),
                pivot,
            },
            other => other,
        }
    }
}
