use thiserror::Error;

/// Errors raised by the library. Verdicts (pass/fail) are never errors; they
/// are returned as [`crate::Certificate`] values.
#[derive(Debug, Error)]
pub enum Error {
    #[error("disconnected")]
    Disconnected,
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("empty set")]
    EmptySet,
    #[error("invalid space: {}", .0.join("; "))]
    InvalidSpace(Vec<String>),
    #[error("invalid map: {}", .0.join("; "))]
    InvalidMap(Vec<String>),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("f not discrete at graph level: {0}")]
    NotDiscrete(String),
    #[error("{what}: size {size} exceeds cap {cap}; {hint}")]
    TooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
        hint: &'static str,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
