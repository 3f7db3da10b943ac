use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] qwalk::Error),

    #[error("{0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for rejected input, 3 for failed numerical checks, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_validation() => 2,
            CliError::Lib(e) if e.is_numerical() => 3,
            CliError::Usage(_) | CliError::Json(_) => 2,
            _ => 1,
        }
    }
}
