use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("patient intersection is empty")]
    EmptyIntersection,

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("labels contain a single class; both classes are required")]
    SingleClass,

    #[error("fold {fold} is missing a class: {detail}")]
    FoldMissingClass { fold: String, detail: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("non-finite fitness {value} for agent {agent}")]
    NonFiniteFitness { agent: usize, value: f64 },

    #[error("co-training view {view} lost a class in round {round}")]
    ViewLostClass { view: usize, round: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
