use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// A precondition on the inputs was violated.
    #[error("{0}")]
    Invalid(String),

    /// A numerical routine produced a non-finite or degenerate result.
    #[error("{0}")]
    Numeric(String),

    /// A learner fit failed, with fold/learner context attached.
    #[error("fit failed (fold {fold}, learner {learner}): {message}")]
    Fit {
        fold: usize,
        learner: String,
        message: String,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
