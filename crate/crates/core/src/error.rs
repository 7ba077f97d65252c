use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record or file is missing a required field or has the wrong shape.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("index {index} out of range for {len} {what}")]
    Bounds {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("model produced an empty elaboration")]
    EmptyElaboration,

    #[error("token {0:?} is not in the model vocabulary")]
    UnknownToken(String),

    #[error("non-finite value in {0}; parameters left untouched")]
    Numeric(&'static str),

    #[error("template error: {0}")]
    Template(String),

    #[error("teacher unavailable for instance {instance_id}: {reason}")]
    TeacherUnavailable { instance_id: String, reason: String },

    #[error("training aborted: {source}; resume from {}", checkpoint.display())]
    Resumable {
        #[source]
        source: Box<Error>,
        checkpoint: PathBuf,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cosine similarity is undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("operation not supported by this model: {0}")]
    Unsupported(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn at_line(line: usize, err: impl std::fmt::Display) -> Self {
        Error::Line {
            line,
            message: err.to_string(),
        }
    }
}
