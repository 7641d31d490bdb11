use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad command line or config file.
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("refusing to overwrite non-empty run directory {0} (pass --force)")]
    RunDirExists(PathBuf),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("empty validation-loss trace")]
    EmptyTrace,
    #[error("gradient check failed: worst relative error {0:e}")]
    GradientCheck(f64),
    #[error(transparent)]
    Core(#[from] smdp_core::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Process exit status: 1 for usage and config errors, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Config(_) => 1,
            HarnessError::Core(smdp_core::Error::Config(_)) => 1,
            _ => 2,
        }
    }
}

impl From<HarnessError> for smdp_core::Error {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Core(inner) => inner,
            other => smdp_core::Error::Io(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
