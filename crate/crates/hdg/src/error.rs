use thiserror::Error;

/// Errors produced by index construction, persistence and queries.
#[derive(Debug, Error)]
pub enum HdgError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Index construction only supports low dimensions; the simplex count of
    /// the per-layer triangulations explodes beyond that.
    #[error("unsupported dimension {dim}: supported range is 1..={max}; project the data or use the exact backend standalone")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("index file version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HdgError>;

impl HdgError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HdgError::InvalidArgument(msg.into())
    }
}
