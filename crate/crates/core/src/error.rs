use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument that violates an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("codebook capacity of {capacity} entries exhausted")]
    Capacity { capacity: usize },

    /// Operation requires state that is not there yet (e.g. decoding against an empty codebook).
    #[error("invalid state: {0}")]
    State(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("malformed record at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
