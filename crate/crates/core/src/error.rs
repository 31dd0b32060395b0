use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A line in an input file could not be parsed.
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// A parent-pointer row does not describe a single rooted tree.
    #[error("sentence {sentence_id}: malformed tree: {message}")]
    Structural { sentence_id: u64, message: String },

    #[error("sentence {sentence_id}: phrase {text:?} is not in the dictionary")]
    MissingPhrase { sentence_id: u64, text: String },

    #[error("{what} {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: String,
        range: &'static str,
    },

    #[error("sidecar does not cover sentences {0:?}")]
    Coverage(Vec<u64>),

    #[error("curation: {0}")]
    Curation(String),

    #[error("no study-1 sentiment for {0:?}")]
    MissingStudy1Sentiment(String),

    #[error("infeasible batch design: {0}")]
    Infeasible(String),

    #[error("invalid response at row {row}: {message}")]
    InvalidResponse { row: usize, message: String },

    /// A statistic is not defined for the given input (zero variance, too few pairs).
    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("{0}")]
    Invalid(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    /// A pipeline stage ran before the stage producing its input.
    #[error("missing {artifact}; run `{producer}` first")]
    MissingArtifact { artifact: String, producer: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
