use std::fmt;

use iterreg::Error;

/// Failure families of the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Parse(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    /// Malformed JSON is a parse error; well-formed JSON that does not fit
    /// the schema is a configuration error.
    pub fn from_json(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof => CliError::Parse(e.to_string()),
            Category::Data => CliError::Config(e.to_string()),
            Category::Io => CliError::Io(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(m) => CliError::Config(m),
            Error::Parse { line, msg } => CliError::Parse(format!("line {line}: {msg}")),
            Error::StrictConfig(_) | Error::Dimension(_) => CliError::Config(msg),
            Error::Numerical { .. }
            | Error::DegenerateData(_)
            | Error::Certificate(_)
            | Error::Generation(_)
            | Error::LinAlg(_) => CliError::Numeric(msg),
            Error::Json(j) => CliError::from_json(j),
            Error::Io(_) => CliError::Io(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
