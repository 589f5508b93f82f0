use thiserror::Error;

/// Errors produced by the registration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The transformed floating image does not overlap the reference.
    #[error("degenerate overlap: no reference pixel maps inside the floating image")]
    DegenerateOverlap,

    /// A normalizing quantity (denominator, variance) vanished.
    #[error("degenerate content: {0}")]
    DegenerateContent(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
