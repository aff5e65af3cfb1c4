use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] surf_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: not a valid NPY file: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("{}: unsupported {reason}", path.display())]
    Unsupported { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("manifest {}: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },

    #[error("bundle {}: version {found} is not readable by this build (expects {expected})", path.display())]
    Version { path: PathBuf, found: u32, expected: u32 },

    #[error("{0}")]
    Usage(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn json(path: &Path, source: serde_json::Error) -> Self {
        BenchError::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Bad input (exit code 2) as opposed to an internal failure (exit 1).
    pub fn is_validation(&self) -> bool {
        match self {
            BenchError::Core(e) => e.is_validation(),
            BenchError::Internal(_) => false,
            _ => true,
        }
    }
}
