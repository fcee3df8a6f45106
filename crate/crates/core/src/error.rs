use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An operand shape does not fit the operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A numeric or structural parameter is out of its allowed range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A schedule references unknown tasks or hosts, or is not one-hot.
    #[error("invalid schedule: {0}")]
    Schedule(String),

    /// Input data is malformed (NaN, negative, out-of-range labels, empty sets).
    #[error("data error: {0}")]
    Data(String),

    /// An API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// A persisted file could not be decoded or does not match the model.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn schedule(msg: impl Into<String>) -> Self {
        Error::Schedule(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
