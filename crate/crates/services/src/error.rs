use crane_twin_bus::BusError;
use crane_twin_historian::HistorianError;
use thiserror::Error;

/// Failure of a crane command or service request.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    /// Malformed or out-of-range request.
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    /// Another run is in progress, or the resource already exists.
    #[error("{0}")]
    Conflict(String),
    /// The crane is not in a state that allows the command.
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    /// Stable machine-readable name of the error class.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::State(_) => "state_error",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn busy() -> Self {
        ServiceError::Conflict("crane is busy with another motion".into())
    }
}

impl From<HistorianError> for ServiceError {
    fn from(e: HistorianError) -> Self {
        match e {
            HistorianError::NotFound(m) => ServiceError::NotFound(m),
            HistorianError::Conflict(m) => ServiceError::Conflict(m),
            HistorianError::Invalid(m) => ServiceError::BadRequest(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<crane_twin_core::Error> for ServiceError {
    fn from(e: crane_twin_core::Error) -> Self {
        match e {
            crane_twin_core::Error::Domain(m) => ServiceError::BadRequest(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<BusError> for ServiceError {
    fn from(e: BusError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
