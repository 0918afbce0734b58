//! Error type of the std crate and its mapping to process exit codes.

use std::fmt;
use std::path::Path;

use bhme_core::HmeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, config keys or argument values.
    Usage,
    /// Missing files, unparsable rows, column mismatches.
    Data,
    /// Training or a linear solve broke down.
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Error {
    pub kind: ErrorKind,
    pub message: String,
}

impl Error {
    pub fn usage(message: impl Into<String>) -> Self {
        Error { kind: ErrorKind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error { kind: ErrorKind::Data, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Error { kind: ErrorKind::Numerical, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Error::data(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

/// `error[<kind>]: <message>` on one line; newlines in the message are
/// flattened so the output stays greppable.
impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{}]: {}", self.kind.label(), flat)
    }
}

impl std::error::Error for Error {}

impl From<HmeError> for Error {
    fn from(e: HmeError) -> Self {
        let kind = match e {
            HmeError::InvalidArgument(_) => ErrorKind::Usage,
            HmeError::Structural(_) | HmeError::Domain(_) | HmeError::Dimension(_) => ErrorKind::Data,
            HmeError::Numerical { .. } | HmeError::Selection(_) => ErrorKind::Numerical,
        };
        Error { kind, message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
