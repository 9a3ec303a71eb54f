use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The remote service could not be reached, or kept failing after all retries.
    #[error("transport error: {0}")]
    Transport(String),

    /// The remote service answered with something we could not interpret.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The remote service rejected our credentials (401/403).
    #[error("authorization rejected by {endpoint} (status {status})")]
    Auth { endpoint: String, status: u16 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A knowledge-source failure while expanding a particular path.
    #[error("expanding path [{}]: {source}", path.join(", "))]
    Expansion {
        path: Vec<String>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("encoding error: {0}")]
    Encode(#[from] serde_json::Error),
}

impl Error {
    pub fn with_path(self, path: &[String]) -> Self {
        Error::Expansion {
            path: path.to_vec(),
            source: Box::new(self),
        }
    }
}
