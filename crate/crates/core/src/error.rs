use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for size {len}")]
    Index { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty sequence: {0}")]
    EmptySequence(&'static str),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{}, line {line}: {msg}", path.display())]
    FileParse { path: PathBuf, line: usize, msg: String },
    #[error("undefined ratio: {0}")]
    UndefinedRatio(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches the file a line-level parse error came from.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, msg } => Error::FileParse {
                path: path.into(),
                line,
                msg,
            },
            other => other,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
