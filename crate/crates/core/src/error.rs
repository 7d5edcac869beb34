use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how the CLI reports them: validation problems
/// (bad arguments, bad record contents) exit with code 1, I/O and file
/// format problems with code 2, numeric failures with code 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: arguments, configuration, record contents.
    #[error("validation: {0}")]
    Validation(String),

    /// A line-oriented input failed to parse.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A binary or structured file violates its format contract
    /// (bad magic, unsupported version, truncation, trailing bytes).
    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Non-finite values or other numeric failures.
    #[error("numeric: {0}")]
    Numeric(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } => 1,
            Error::Format(_) | Error::Io(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
