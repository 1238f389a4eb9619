use thiserror::Error;

/// Task errors. Messages name fields and line numbers, never row contents.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("label `{0}` is not part of the model's label set")]
    UnknownLabel(String),

    #[error("model has no training documents")]
    EmptyModel,

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite feature at row {row}")]
    NonFiniteFeature { row: usize },

    #[error("dataset schema `{found}` does not match required schema `{required}`")]
    SchemaMismatch { required: String, found: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("row {line}: {reason}")]
    InvalidRow { line: usize, reason: String },

    #[error("model payload: {0}")]
    Payload(String),

    #[error("task failure: {0}")]
    TaskFailure(String),

    #[error("io: {0}")]
    Io(String),
}
