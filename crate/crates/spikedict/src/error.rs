use std::path::PathBuf;

use spikedict_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

fn core_is_numerical(e: &CoreError) -> bool {
    match e {
        CoreError::NoSelectableAtom
        | CoreError::IllConditionedSupport { .. }
        | CoreError::DegenerateTemplate
        | CoreError::DegenerateAtom { .. }
        | CoreError::NoEvents { .. }
        | CoreError::NonFinite
        | CoreError::UndefinedSnr
        | CoreError::UnreachablePerturbation
        | CoreError::InfeasibleRate => true,
        CoreError::InWindow { source, .. } => core_is_numerical(source),
        _ => false,
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data or format, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => EXIT_USAGE,
            Error::Core(e) if core_is_numerical(e) => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }
}
