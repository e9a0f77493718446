use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt data: {0}")]
    CorruptData(String),

    #[error("bad magic number in index file")]
    BadMagic,

    #[error("unsupported index version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("buffer pool exhausted, retry later")]
    RetryLater,

    #[error("logic error: {0}")]
    Logic(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptData(msg.into())
    }

    /// True for every variant that indicates malformed on-disk bytes.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            Error::CorruptData(_) | Error::BadMagic | Error::VersionMismatch { .. }
        )
    }
}
