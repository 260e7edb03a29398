use thiserror::Error;

/// Errors raised across the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {message} ({diagnostics})")]
    Numerical { message: String, diagnostics: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, diagnostics: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            diagnostics: diagnostics.into(),
        }
    }

    pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }
}
