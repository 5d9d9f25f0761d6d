use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    /// The input violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("no admissible power-law tail: {0}")]
    NoFit(String),

    #[error("non-positive value {value} at t = {t}")]
    Domain { t: i64, value: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("invalid injection plan: {0}")]
    Plan(String),
}

impl Error {
    /// True when the failure is attributable to user input rather than to the tool.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
