use graspweb_core::env::EnvError;
use graspweb_core::eval::EvalError;
use graspweb_core::ppo::PpoError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path} has format version {found}, this build reads version {expected}")]
    CheckpointVersionMismatch { path: String, found: u32, expected: u32 },
    #[error("{path} is not a valid checkpoint: {message}")]
    CorruptCheckpoint { path: String, message: String },
    #[error("corrupt trajectory log {path}, line {line}: {message}")]
    CorruptLog { path: String, line: usize, message: String },
    #[error(transparent)]
    Training(#[from] PpoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Usage(_) => 2,
            _ => 3,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
