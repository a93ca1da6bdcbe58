use thiserror::Error;

/// Errors raised by the decision engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time step {t} out of range 1..={max}")]
    Bounds { t: u64, max: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible: {0}")]
    Feasibility(String),

    #[error("out-of-order observation: expected epoch {expected}, got {got}")]
    Sequencing { expected: usize, got: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("empty schedule: first epoch {first} exceeds horizon {horizon}")]
    EmptySchedule { first: u64, horizon: u64 },

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.kind() {
            csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
            _ => Error::Parse {
                line,
                message: err.to_string(),
            },
        }
    }
}
