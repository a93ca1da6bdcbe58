use switchpoint_core::Error;
use thiserror::Error as ThisError;

/// Exit code for configuration and input errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("runtime error: {0}")]
    Runtime(String),

    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) | CliError::Output { .. } => EXIT_RUNTIME,
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::Config(_)
            | Error::Domain(_)
            | Error::Bounds { .. }
            | Error::EmptySchedule { .. }
            | Error::Parse { .. }
            | Error::ResourceGuard(_) => CliError::Config(err.to_string()),
            Error::Feasibility(_) | Error::Sequencing { .. } | Error::Validation(_) | Error::Io(_) => {
                CliError::Runtime(err.to_string())
            }
        }
    }
}
