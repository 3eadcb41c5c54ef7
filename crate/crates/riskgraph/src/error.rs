//! Error classes of the command line and their exit codes.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    /// Invalid configuration or command-line values.
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Input or intermediate file that does not parse or violates its invariants.
    #[error("{path}: {reason}")]
    Data { path: PathBuf, reason: String },
    #[error("{path} was produced with config digest {found}, current config has {expected}; rerun with --force to overwrite")]
    Stale {
        path: PathBuf,
        expected: String,
        found: String,
    },
    /// A pipeline stage failed on valid inputs.
    #[error("stage `{stage}` failed: {cause}")]
    Stage { stage: &'static str, cause: String },
}

impl RunError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        RunError::Data {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn stage(stage: &'static str, cause: impl ToString) -> Self {
        RunError::Stage {
            stage,
            cause: cause.to_string(),
        }
    }

    /// Process exit code; 2 is shared with command-line usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io { .. } => 3,
            RunError::Data { .. } => 4,
            RunError::Stale { .. } => 5,
            RunError::Stage { .. } => 6,
        }
    }
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;
