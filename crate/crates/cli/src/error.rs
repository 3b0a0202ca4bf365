use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration file or value; maps to exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Bad command-line usage; maps to exit code 2.
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fedigw::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
