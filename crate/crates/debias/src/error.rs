use std::io;
use std::path::{Path, PathBuf};

use crate::remote::ProviderError;

/// Failure of a CLI run. Provider failures exit with 2, everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Provider(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, message: impl ToString) -> Self {
        Error::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn data(message: impl ToString) -> Self {
        Error::Data(message.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
