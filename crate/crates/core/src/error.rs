use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("row {row} has {found} values, expected {expected}")]
    Arity {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("unknown record index {index} in {side} dataset (len {len})")]
    UnknownIndex {
        side: &'static str,
        index: usize,
        len: usize,
    },

    #[error("{side} record {index} referenced {count} times, stability bound is {stability}")]
    StabilityViolation {
        side: &'static str,
        index: usize,
        count: usize,
        stability: u32,
    },

    #[error("invalid label `{0}`, expected `+` or `-`")]
    Label(String),

    #[error("formula kind mismatch: {0}")]
    KindMismatch(String),

    #[error("invalid formula: {0}")]
    Formula(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown target `{0}`")]
    UnknownTarget(String),

    #[error("session is {0}")]
    SessionState(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
