use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::gateway::GatewayError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed or inconsistent file content.
    #[error("{0}")]
    Format(String),
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] posegen_core::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    /// Bad configuration or arguments.
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attaches a file path to content errors.
    pub fn context(self, path: &Path) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::File { .. }) => e,
            other => Error::File {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        }
    }
}
