use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ShgpError>;

#[derive(Debug, Error)]
pub enum ShgpError {
    #[error("{0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Dimension(String),

    #[error("{0}")]
    Numerical(String),

    #[error("impossible observation at t={t}: every state has zero likelihood")]
    ImpossibleObservation { t: usize },

    #[error("sampler failed at iteration {iteration}: {source}")]
    Sweep {
        iteration: usize,
        #[source]
        source: Box<ShgpError>,
    },

    #[error("{0}")]
    Config(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ShgpError {
    /// Short, stable name used by the command-line front end for its
    /// machine-parseable error line.
    pub fn class(&self) -> &'static str {
        match self {
            ShgpError::InvalidParameter(_) => "invalid-parameter",
            ShgpError::Dimension(_) => "dimension",
            ShgpError::Numerical(_) => "numerical",
            ShgpError::ImpossibleObservation { .. } => "impossible-observation",
            ShgpError::Sweep { source, .. } => source.class(),
            ShgpError::Config(_) => "config",
            ShgpError::Format { .. } => "format",
            ShgpError::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ShgpError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        ShgpError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
