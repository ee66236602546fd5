use std::fmt;

/// Errors produced by the library.
///
/// `Usage` marks caller mistakes (bad arguments, mismatched lattices) and maps
/// to exit code 2 in the CLI; everything else maps to exit code 1.
#[derive(Debug)]
pub enum Error {
    /// Invalid arguments or preconditions violated by the caller.
    Usage(String),
    /// Malformed PPM/PGM data; `offset` is the byte position of the problem.
    Format { offset: u64, message: String },
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// A covariance matrix failed the positive-definiteness check.
    InvalidModel(String),
    /// Bisection found no sign change when looking for a nontrivial fixed point.
    NoFixedPoint { q: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Format { offset, message } => {
                write!(f, "format error at byte {offset}: {message}")
            }
            Error::Io(err) => write!(f, "i/o error: {err}"),
            Error::InvalidModel(msg) => write!(f, "invalid model: {msg}"),
            Error::NoFixedPoint { q } => {
                write!(f, "no nontrivial fixed point found for q = {q}")
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
