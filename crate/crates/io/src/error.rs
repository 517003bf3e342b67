use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or inconsistent input data.
    #[error("{path}{}: {reason}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Data {
        path: PathBuf,
        line: Option<u64>,
        reason: String,
    },

    /// Unreadable or invalid configuration or manifest.
    #[error("{path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] streamad::Error),
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, line: Option<u64>, reason: impl Into<String>) -> Self {
        IoError::Data {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        IoError::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Whether the error stems from configuration rather than data.
    pub fn is_config(&self) -> bool {
        match self {
            IoError::Config { .. } => true,
            IoError::Core(e) => matches!(
                e,
                streamad::Error::Config { .. } | streamad::Error::IncompatibleRepresentation { .. }
            ),
            _ => false,
        }
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;
