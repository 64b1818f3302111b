use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("label out of domain: {0}")]
    Domain(String),

    #[error("duplicate observation for worker {worker} on task {task}")]
    DuplicateObservation { worker: String, task: String },

    #[error("dataset has no gold labels")]
    MissingGold,

    #[error("zero variance in correlation input")]
    ZeroVariance,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("no prediction for gold-labeled task {task}")]
    Coverage { task: usize },

    #[error("non-positive propensity {value} for worker {worker} on task {task}")]
    NonPositivePropensity {
        worker: usize,
        task: usize,
        value: f64,
    },

    #[error("every class has zero posterior mass for task {task}")]
    DegeneratePosterior { task: usize },

    #[error("singular value decomposition failed to converge")]
    Svd,

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
