use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line, config or recipe contents.
    #[error("{0}")]
    Config(String),

    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },

    /// Row-level problem in a source file; `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Core(#[from] influence_ad_core::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(path: &Path, msg: impl Into<String>) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: msg.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 0 success, 1 usage/config, 2 data, 3 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        use influence_ad_core::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::Data { .. } | CliError::Schema { .. } | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                E::Config(_) | E::Domain(_) | E::Incompatible(_) => 1,
                E::Diverged { .. } | E::NonFinite { .. } => 3,
                E::Shape { .. } | E::Input(_) | E::Corrupt(_) => 2,
            },
        }
    }
}
