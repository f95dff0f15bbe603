use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("corrupt file {}: {msg}", path.display())]
    Corrupt { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] hjarl_core::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn corrupt(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        CliError::Corrupt {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 numerical failure or corrupt input,
    /// 4 non-convergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use hjarl_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Corrupt { .. } => 3,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                E::Config(_) | E::InvalidGrid(_) | E::Shape(_) | E::Index { .. } => 2,
                E::Numerical(_) | E::Domain(_) | E::Json(_) => 3,
                E::NonConvergence { .. } => 4,
                E::Io(_) => 1,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
