use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no valid businesses in {}", .0.display())]
    NoBusinesses(PathBuf),

    #[error("cache file {} is not a valid cache: {reason}", path.display())]
    BadCache { path: PathBuf, reason: String },

    #[error("missing prerequisite stage `{stage}`: expected {}; run `{stage}` first", path.display())]
    MissingStage { stage: &'static str, path: PathBuf },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("power-law fit needs at least {needed} tail observations, got {got}")]
    TooFewTailPoints { needed: usize, got: usize },

    #[error("power-law fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("training data has a single class")]
    SingleClass,

    #[error("invalid training data: {0}")]
    InvalidData(String),

    #[error("city `{city}` has too few examples for {folds}-fold cross-validation")]
    TooFewExamples { city: String, folds: usize },

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the CLI: 1 config, 2 missing prerequisite, 3 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::MissingStage { .. } => 2,
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
