use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    File {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] mlsg_core::Error),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn file(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::File {
            context: context.into(),
            source,
        }
    }

    /// 2 for configuration and usage problems, 3 for data and file problems,
    /// 4 for numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::File { .. } => 3,
            CliError::Core(e) => match e {
                mlsg_core::Error::Diverged { .. } | mlsg_core::Error::Numeric(_) => 4,
                _ => 3,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
