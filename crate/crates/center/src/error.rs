use padme_core::ProtocolError;
use thiserror::Error;

/// Errors surfaced by the center. `code()` is the stable identifier carried
/// in API error bodies.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CenterError {
    #[error("station `{0}` is already registered")]
    DuplicateStation(String),
    #[error("bad credential: {0}")]
    BadCredential(String),
    #[error("unknown station `{0}`")]
    UnknownStation(String),
    #[error("unknown train `{0}`")]
    UnknownTrain(String),
    #[error("station `{station}` serves schema `{found}`, task requires `{required}`")]
    SchemaMismatch { station: String, required: String, found: String },
    #[error("route is empty")]
    EmptyRoute,
    #[error("approver is not a party to this train")]
    NotAParty,
    #[error("this party has already decided")]
    AlreadyDecided,
    #[error("signature does not verify")]
    BadSignature,
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("station `{0}` is not at the route cursor")]
    WrongStation(String),
    #[error("envelope recipient does not match the next hop")]
    RecipientMismatch,
    #[error("results are not ready")]
    NotReady,
    #[error("train was blocked by exit control")]
    BlockedByExitControl,
    #[error("train was rejected")]
    TrainRejected,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl CenterError {
    pub fn code(&self) -> &'static str {
        match self {
            CenterError::DuplicateStation(_) => "DuplicateStation",
            CenterError::BadCredential(_) => "BadCredential",
            CenterError::UnknownStation(_) => "UnknownStation",
            CenterError::UnknownTrain(_) => "UnknownTrain",
            CenterError::SchemaMismatch { .. } => "SchemaMismatch",
            CenterError::EmptyRoute => "EmptyRoute",
            CenterError::NotAParty => "NotAParty",
            CenterError::AlreadyDecided => "AlreadyDecided",
            CenterError::BadSignature => "BadSignature",
            CenterError::IllegalTransition(_) => "IllegalTransition",
            CenterError::AuthFailed(_) => "AuthFailed",
            CenterError::WrongStation(_) => "WrongStation",
            CenterError::RecipientMismatch => "RecipientMismatch",
            CenterError::NotReady => "NotReady",
            CenterError::BlockedByExitControl => "BlockedByExitControl",
            CenterError::TrainRejected => "TrainRejected",
            CenterError::Invalid(_) => "Invalid",
            CenterError::Storage(_) => "Storage",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            CenterError::AuthFailed(_) | CenterError::BadCredential(_) | CenterError::BadSignature => 401,
            CenterError::NotAParty | CenterError::WrongStation(_) => 403,
            CenterError::UnknownStation(_) | CenterError::UnknownTrain(_) => 404,
            CenterError::DuplicateStation(_)
            | CenterError::AlreadyDecided
            | CenterError::IllegalTransition(_)
            | CenterError::NotReady
            | CenterError::BlockedByExitControl
            | CenterError::TrainRejected => 409,
            CenterError::SchemaMismatch { .. }
            | CenterError::EmptyRoute
            | CenterError::RecipientMismatch
            | CenterError::Invalid(_) => 422,
            CenterError::Storage(_) => 500,
        }
    }
}

impl From<ProtocolError> for CenterError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::IllegalTransition { .. } => CenterError::IllegalTransition(e.to_string()),
            ProtocolError::EmptyRoute => CenterError::EmptyRoute,
            other => CenterError::Invalid(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CenterError {
    fn from(e: std::io::Error) -> Self {
        CenterError::Storage(e.to_string())
    }
}
