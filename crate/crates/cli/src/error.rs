use thiserror::Error;

/// Failures surfaced by the command-line pipeline, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl From<aquarender_core::Error> for CliError {
    fn from(e: aquarender_core::Error) -> Self {
        match e {
            aquarender_core::Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
