use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Core(#[from] ucbzero_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for I/O, 4 for shape mismatches.
    pub fn exit_code(&self) -> i32 {
        use ucbzero_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Csv(_) => 3,
            CliError::Shape(_) => 4,
            CliError::Core(e) => match e {
                E::Shape(_) | E::Index { .. } => 4,
                E::Io(_) | E::Parse { .. } => 3,
                E::Parameter(_) | E::TooLarge { .. } | E::DegenerateTarget(_) => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
