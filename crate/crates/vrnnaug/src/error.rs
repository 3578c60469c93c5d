use std::path::{Path, PathBuf};

use vrnnaug_core::Error as CoreError;

/// Failure of a command, grouped by the exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Argument(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// 2 for bad arguments, 3 for data and file problems, 4 for numeric
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Argument(_) => 2,
            CliError::Data(_) | CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, msg: impl std::fmt::Display) -> CliError {
        CliError::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        }
    }

    pub fn context(self, ctx: impl std::fmt::Display) -> CliError {
        match self {
            CliError::Argument(m) => CliError::Argument(format!("{ctx}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{ctx}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            _ if e.is_numeric() => CliError::Numeric(msg),
            CoreError::InvalidArgument(_) => CliError::Argument(msg),
            _ => CliError::Data(msg),
        }
    }
}
