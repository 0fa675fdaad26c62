use std::path::PathBuf;

use diffcore::DiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TcfmError {
    #[error("config error: {0}")]
    Config(String),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("training diverged at step {step} (last good checkpoint: {last_good:?})")]
    Diverged { step: usize, last_good: Option<PathBuf> },
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

impl TcfmError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TcfmError::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            TcfmError::Config(_) | TcfmError::Domain(_) | TcfmError::Usage(_) | TcfmError::Shape(_) => 2,
            TcfmError::Data(_)
            | TcfmError::Schema(_)
            | TcfmError::Generation(_)
            | TcfmError::Checkpoint(_)
            | TcfmError::Io { .. } => 3,
            TcfmError::NonFinite { .. } | TcfmError::Diverged { .. } => 4,
            TcfmError::Diff(DiffError::NonFinite(_)) => 4,
            TcfmError::Diff(_) => 2,
        }
    }
}

pub type Result<T, E = TcfmError> = std::result::Result<T, E>;
