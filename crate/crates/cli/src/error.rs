use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        })
    }

    /// A library error caused by the input data.
    pub fn data(e: taustar::Error) -> Self {
        Self::numerical_or(e, CliError::Data)
    }

    /// A library error caused by flag values.
    pub fn usage(e: taustar::Error) -> Self {
        Self::numerical_or(e, CliError::Usage)
    }

    fn numerical_or(e: taustar::Error, other: fn(String) -> CliError) -> Self {
        match e {
            taustar::Error::Precision { .. } | taustar::Error::NoConvergence(_) => CliError::Numerical(e.to_string()),
            _ => other(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
