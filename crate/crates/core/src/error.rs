use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the physical or numerical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Round-trip gain |mu| >= 1: the round-trip series does not converge.
    #[error("round-trip gain |mu| = {0} is not below 1; the cavity series diverges")]
    Divergent(f64),

    /// D(s) vanished while forming a transfer function.
    #[error("singular response: D(s) = 0 at s = {0}")]
    Singular(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
