use std::path::Path;

use nngp::NngpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<NngpError> for CliError {
    fn from(e: NngpError) -> Self {
        let msg = e.to_string();
        match e {
            NngpError::InvalidInput(_) | NngpError::SingularDesign(_) | NngpError::MissingLatentSamples => {
                CliError::Data(msg)
            }
            NngpError::UnbalancedDesign(_) => CliError::Config(msg),
            NngpError::NonPositiveConditionalVariance { .. }
            | NngpError::NonPositiveScale
            | NngpError::NotEnoughSamples(_) => CliError::Numerical(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
