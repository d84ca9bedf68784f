use thiserror::Error;

/// Errors raised by the robust PCA toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The algorithm reached a state where the requested quantity is undefined
    /// (no surviving points, an identically zero operator, ...).
    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("stream exhausted after {consumed} samples")]
    StreamExhausted { consumed: u64 },

    #[error("unsupported diagnostic: {0}")]
    UnsupportedDiagnostic(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateState(msg.into())
    }

    /// Prefixes the message with extra context, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{ctx}: {m}")),
            Error::DegenerateState(m) => Error::DegenerateState(format!("{ctx}: {m}")),
            Error::UnsupportedDiagnostic(m) => {
                Error::UnsupportedDiagnostic(format!("{ctx}: {m}"))
            }
            Error::Internal(m) => Error::Internal(format!("{ctx}: {m}")),
            Error::Io(m) => Error::Io(format!("{ctx}: {m}")),
            e @ Error::StreamExhausted { .. } => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
