use std::path::PathBuf;

use thiserror::Error;

/// Everything that can stop a pipeline stage.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("missing prerequisite {0} (run the earlier stage first)")]
    Missing(PathBuf),
    #[error(transparent)]
    Core(#[from] mtl_core::Error),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

impl LabError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Io { .. } => "io",
            LabError::Parse { .. } => "parse",
            LabError::Config { .. } => "config",
            LabError::Missing(_) => "missing",
            LabError::Core(_) => "compute",
            LabError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) => 2,
            LabError::Config { .. } => 3,
            LabError::Missing(_) => 4,
            LabError::Io { .. } => 5,
            LabError::Parse { .. } => 6,
            LabError::Core(_) => 7,
        }
    }

    /// `error kind=<kind> code=<n> message="<text>"` on one line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ").replace('"', "'");
        format!("error kind={} code={} message=\"{msg}\"", self.kind(), self.exit_code())
    }

    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        LabError::Config { key: key.to_string(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }
}
