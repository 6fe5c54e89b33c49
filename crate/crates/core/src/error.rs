use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid snippet {id:?}: {message}")]
    InvalidSnippet { id: String, message: String },

    #[error("duplicate snippet id {0:?}")]
    DuplicateId(String),

    #[error("label {0:?} is not in the declared taxonomy")]
    UnknownLabel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty vocabulary: every term was pruned")]
    EmptyVocabulary,

    #[error("unknown token id {0}")]
    UnknownTokenId(u32),

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("bundle format version mismatch: bundle is v{found}, reader supports v{expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
