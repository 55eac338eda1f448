use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed combinatorial input: self-loops, duplicate edges, shape mismatches.
    #[error("structural error: {0}")]
    Structural(String),

    /// A gauge block (or other matrix that must be inverted) is numerically singular.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// Non-finite values or a failed decomposition.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller handed in an object that does not satisfy an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Json(_) => 2,
            Error::Numeric(_) | Error::Conditioning(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
