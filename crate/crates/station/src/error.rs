use padme_center::ClientError;
use padme_core::crypto::CryptoError;
use padme_core::ProtocolError;
use padme_tasks::TaskError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationError {
    #[error("fatal configuration error: {0}")]
    FatalConfig(String),
    #[error("dataset schema `{found}` does not match required schema `{required}`")]
    SchemaMismatch { required: String, found: String },
    #[error("task failure: {0}")]
    TaskFailure(String),
    #[error("decision is not signed by an authorized admin key")]
    UnauthorizedApprover,
    #[error("no pending approval for train `{0}`")]
    NoSuchPending(String),
    #[error("envelope: {0}")]
    Crypto(#[from] CryptoError),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("center: {0}")]
    Center(#[from] ClientError),
    #[error("approval channel closed")]
    ChannelClosed,
}

impl From<TaskError> for StationError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::SchemaMismatch { required, found } => StationError::SchemaMismatch { required, found },
            other => StationError::TaskFailure(other.to_string()),
        }
    }
}

impl From<ProtocolError> for StationError {
    fn from(e: ProtocolError) -> Self {
        StationError::Protocol(e.to_string())
    }
}
