use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Rope length at or below zero makes the swing dynamics singular.
    #[error("singular rope length {0}")]
    Singularity(f64),
    /// A state field is NaN or infinite.
    #[error("non-finite value in field `{0}`")]
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
