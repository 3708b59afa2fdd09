use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown event id {0}")]
    UnknownEvent(usize),

    #[error("unknown label id {0}")]
    UnknownLabel(usize),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("unknown sequence id `{0}`")]
    UnknownSequence(String),

    #[error("invalid sequence `{id}`: {reason}")]
    InvalidSequence { id: String, reason: String },

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("duplicate entry: {0}")]
    Duplicate(String),

    #[error("unknown criterion `{0}` (expected one of: union, frequency, adaptive, beta_fpr, bes_mi, caig)")]
    UnknownCriterion(String),

    #[error("unknown preset `{0}` (expected one of: tiny, standard, longtail)")]
    UnknownPreset(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
