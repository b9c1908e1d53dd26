use thiserror::Error;

/// Errors raised by the solver library.
///
/// The CLI maps the variants onto its exit-code contract, so new variants
/// must be slotted into one of the existing families.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("strict parameter validation failed: {0}")]
    StrictConfig(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("non-finite iterate at iteration {iteration}: {what}")]
    Numerical { iteration: usize, what: String },

    #[error("certificate error: {0}")]
    Certificate(String),

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
