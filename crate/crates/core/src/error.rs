use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the edgefair library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A rate metric whose denominator is zero (e.g. utility with no critical events).
    #[error("metric `{0}` is undefined for this stream")]
    UndefinedMetric(&'static str),

    /// Secrecy rate is zero: the eavesdropper matches or beats the legitimate receiver.
    #[error("link is insecure: secrecy rate is zero")]
    InsecureLink,

    #[error("deadline cannot be met: best achievable offload time {best_time_s} s exceeds {deadline_s} s")]
    DeadlineInfeasible { best_time_s: f64, deadline_s: f64 },

    #[error("trace parse error at line {line}: {message}")]
    TraceParse { line: u64, message: String },

    #[error("scenario error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("scenario is infeasible for users {users:?}: {reason}")]
    Infeasible { users: Vec<usize>, reason: String },

    #[error("unsupported bundle schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },

    #[error("bundle does not match schema: {0}")]
    Schema(String),

    #[error("oracle refused: {what} needs {needed} evaluations, limit is {limit}")]
    OracleSize { what: &'static str, needed: u128, limit: u128 },

    #[error("relative gap is undefined when the lower bound is zero")]
    UndefinedGap,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
