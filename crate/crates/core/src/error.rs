use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine.
///
/// Variants split into two families: validation failures (malformed input
/// files, bad configuration, contract violations) and runtime failures
/// (I/O, adapter transport, incomplete replay fixtures). The CLI maps them
/// to distinct exit codes through [`Error::is_validation`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("unsupported PGM: {0}")]
    UnsupportedFormat(String),

    #[error("truncated PGM payload: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("manifest line {line}: {message}")]
    ManifestLine { line: usize, message: String },

    #[error("duplicate image_id in manifest: {0}")]
    DuplicateId(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("replay fixture error: {0}")]
    Fixture(String),

    #[error("adapter transport error: {0}")]
    Transport(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failing
    /// environment or backend.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::UnsupportedFormat(_)
                | Error::Truncated { .. }
                | Error::ManifestLine { .. }
                | Error::DuplicateId(_)
                | Error::InvalidMask(_)
                | Error::Config(_)
                | Error::Contract(_)
                | Error::DimensionMismatch { .. }
        )
    }
}
