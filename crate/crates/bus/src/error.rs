use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    /// Malformed topic, pattern or frame.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("connection error: {0}")]
    Connection(String),
}

impl BusError {
    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        BusError::Protocol(msg.into())
    }

    pub(crate) fn connection(msg: impl Into<String>) -> Self {
        BusError::Connection(msg.into())
    }
}
