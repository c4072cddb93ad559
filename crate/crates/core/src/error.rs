//! Error type shared by all toolkit modules.

use std::fmt;

/// Errors produced by waveform, device, metric and optimizer operations.
#[derive(Debug)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    /// A referenced channel, section or artifact does not exist.
    NotFound(String),
    /// A metric is undefined because the waveform has no usable transition.
    NoTransition(String),
    /// The regression basis is rank-deficient beyond the ridge term.
    DegenerateBasis(String),
    /// A fitness function returned a non-finite value.
    Evaluation {
        particle: usize,
        iteration: usize,
        message: String,
    },
    Io(std::io::Error),
    Json(serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NotFound(msg) => write!(f, "not found: {msg}"),
            Error::NoTransition(msg) => write!(f, "no transition: {msg}"),
            Error::DegenerateBasis(msg) => write!(f, "degenerate basis: {msg}"),
            Error::Evaluation {
                particle,
                iteration,
                message,
            } => write!(
                f,
                "evaluation error at particle {particle}, iteration {iteration}: {message}"
            ),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
