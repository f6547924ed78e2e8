use std::path::PathBuf;

use evjrs_core::instances::InstanceError;
use evjrs_core::learner::LearnError;
use evjrs_core::mip::MipError;
use evjrs_core::netmodel::NetError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Malformed file content. `offset` is a byte offset into the file when known.
    #[error("{path}: {message}{}", offset.map(|o| format!(" (byte {o})")).unwrap_or_default())]
    Format {
        path: PathBuf,
        offset: Option<usize>,
        message: String,
    },
    #[error(transparent)]
    Network(#[from] NetError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Model(#[from] MipError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("solve failed: {0}")]
    Solve(String),
    #[error("solution violates {count} constraints (max residual {max_residual:e})")]
    Verification { count: usize, max_residual: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(
        path: impl Into<PathBuf>,
        offset: Option<usize>,
        message: impl Into<String>,
    ) -> Error {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Short machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Network(_) | Error::Instance(_) => "invalid-input",
            Error::Model(_) => "model",
            Error::Learn(_) => "learner",
            Error::Solve(_) => "solve",
            Error::Verification { .. } => "verification",
            Error::Config(_) => "config",
        }
    }

    /// Process exit code for this error; 2 is reserved for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification { .. } => 1,
            Error::Io { .. } => 3,
            Error::Format { .. } => 4,
            Error::Network(_) | Error::Instance(_) | Error::Config(_) => 5,
            Error::Model(_) | Error::Solve(_) => 6,
            Error::Learn(_) => 7,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
