use thiserror::Error;

/// Errors produced by geometry construction, bounds, design and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// The steering matrix lost column rank (coincident angles, co-located elements).
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    /// The Fisher information is singular or too badly conditioned to invert.
    #[error("unidentifiable configuration: {0}")]
    UnidentifiableConfiguration(String),

    #[error("infeasible spacing: {0}")]
    InfeasibleSpacing(String),

    #[error("too many sources: {0}")]
    TooManySources(String),

    #[error("no contiguous coarray segment around lag zero")]
    NoContiguousCoarray,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
