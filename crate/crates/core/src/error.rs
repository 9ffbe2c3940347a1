use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Where a parse error occurred inside a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(u64),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Byte(n) => write!(f, "byte {n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("PLY {location}: {message}")]
    Ply { location: Location, message: String },

    #[error("face {face}: vertex index {index} out of range for {vertex_count} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: u64,
        vertex_count: usize,
    },

    #[error("FMAT: {0}")]
    Fmat(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn ply(location: Location, message: impl Into<String>) -> Self {
        Error::Ply {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::InvalidParam(message.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParam(_) | Error::Config(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }

    /// Attach a file path to errors that do not already carry one.
    pub fn with_path(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::Format { .. }) => e,
            e @ (Error::InvalidParam(_) | Error::Config(_)) => e,
            other => Error::Format {
                path: path.into(),
                message: other.to_string(),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
