use std::io;

use thiserror::Error;

/// Crate-wide error type. The variants map onto the CLI exit-code classes:
/// format/data problems, crypto/key problems, and plain I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("crypto error: {0}")]
    Crypto(String),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Error {
        Error::Format(msg.into())
    }

    pub fn crypto(msg: impl Into<String>) -> Error {
        Error::Crypto(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
