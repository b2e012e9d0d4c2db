use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("missing {what}: {}", path.display())]
    Missing { what: &'static str, path: PathBuf },

    #[error(transparent)]
    Core(#[from] gsc_core::Error),

    #[error("writing {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 2 for bad invocations or inputs, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Missing { .. } => 2,
            CliError::Core(e) => match e {
                gsc_core::Error::Io { .. } => 1,
                _ => 2,
            },
            CliError::Write { .. } | CliError::Runtime(_) => 1,
        }
    }
}
