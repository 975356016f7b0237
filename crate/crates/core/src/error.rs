use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the fitting and rating pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric overflow: {0}")]
    Overflow(String),

    /// Malformed CSV cell or record. `row` is the 1-based data row (header excluded).
    #[error("parse error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("value error at row {row}: {message}")]
    Value { row: usize, message: String },

    /// Formula syntax error; `position` is a 0-based character offset.
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown factor '{0}'")]
    UnknownFactor(String),

    #[error("design matrix is rank deficient (dummy trap): column(s) {} linearly dependent on earlier columns", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("IRLS did not converge after {} iterations (deviance trace: {trace:?})", .trace.len().saturating_sub(1))]
    NonConvergence { trace: Vec<f64> },

    #[error("models are not strictly nested: {0}")]
    NotNested(String),

    #[error("models were fitted to different data")]
    MixedData,

    #[error("range error: {0}")]
    Range(String),

    #[error("{0}")]
    Invalid(String),
}
