use thiserror::Error;

use crate::route::RouteStatus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("unrepresentable value: {0}")]
    UnrepresentableValue(String),

    #[error("malformed archive: {0}")]
    MalformedArchive(String),

    #[error("archive format version {found} is newer than supported version {supported}")]
    VersionMismatch { found: u16, supported: u16 },

    #[error("illegal route transition `{op}` from {from:?} (cursor {cursor} of {len})")]
    IllegalTransition {
        op: &'static str,
        from: RouteStatus,
        cursor: usize,
        len: usize,
    },

    #[error("route must contain at least one station")]
    EmptyRoute,

    #[error("station `{0}` appears more than once on the route")]
    DuplicateStation(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("decode error: {0}")]
    Decode(String),
}
