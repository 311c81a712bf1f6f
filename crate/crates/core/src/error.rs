use std::path::PathBuf;

/// Errors produced anywhere in the murmur pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed audio: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("no recordings matched")]
    EmptyManifest,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("corrupt data: {0}")]
    Corrupt(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
