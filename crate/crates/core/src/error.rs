use std::path::PathBuf;

use thiserror::Error;

use crate::annotator::AnnotateError;

/// Errors raised by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("decoder failed ({status}): {stderr}")]
    Decoder { status: String, stderr: String },

    #[error("decoder produced no frames for asset {0}")]
    NoFrames(String),

    #[error("frame {path}: {message}")]
    Frame { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("missing scene analysis for asset {0}")]
    MissingAnalysis(String),

    #[error("asset {0} has no view_count but the chain sorts by views")]
    MissingViewCount(String),

    #[error("dangling asset reference: {0}")]
    DanglingAsset(String),

    #[error("annotation failed: {0}")]
    Annotate(#[from] AnnotateError),

    #[error("embedding failed: {0}")]
    Embedding(String),

    #[error("{stage} output missing at {}; run the {stage} stage first", .path.display())]
    MissingStageOutput { stage: String, path: PathBuf },

    #[error("{stage} stage failed for {} asset(s); first: {}", .failures.len(), .failures.first().map(String::as_str).unwrap_or(""))]
    StageFailed { stage: String, failures: Vec<String> },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failing stage.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidInput(_)
                | Error::MalformedLine { .. }
                | Error::MissingStageOutput { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
