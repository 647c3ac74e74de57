use thiserror::Error;

/// Errors raised by the accounting routines.
///
/// Every variant maps to a stable reason code (see [`Error::code`]) that the
/// CLI prints on a single line.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("unbounded ratio: {0}")]
    UnboundedRatio(String),
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("size limit exceeded: {0}")]
    Size(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "E_DOMAIN",
            Error::UnboundedRatio(_) => "E_UNBOUNDED_RATIO",
            Error::UnsupportedRegime(_) => "E_UNSUPPORTED_REGIME",
            Error::Size(_) => "E_SIZE",
            Error::Range(_) => "E_RANGE",
            Error::Io(_) => "E_IO",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
