use thiserror::Error;

/// Failures surfaced by the command line, each with a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Failed(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    Missing(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Shape(_) => 4,
        }
    }
}

impl From<boostlab::Error> for CliError {
    fn from(e: boostlab::Error) -> Self {
        use boostlab::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Shape { .. } => CliError::Shape(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
