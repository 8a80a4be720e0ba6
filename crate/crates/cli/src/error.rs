use std::fmt;
use std::process::ExitCode;

use corrsens::Error;

#[derive(Debug)]
pub enum CliError {
    /// Invalid or unreadable configuration; the message names the field.
    Config(String),
    Numerical(String),
    Model(String),
    Io(String),
    /// Reproduction finished but some toleranced checks failed.
    ChecksFailed(usize),
}

impl CliError {
    pub fn config(field: &str, message: impl fmt::Display) -> Self {
        CliError::Config(format!("{field}: {message}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Model(_) => 4,
            CliError::Io(_) => 5,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Model(m) => write!(f, "model error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::ChecksFailed(n) => write!(f, "{n} reference checks failed"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::Domain(_) => {
                CliError::Config(msg)
            }
            Error::ModelEvaluation { .. } => CliError::Model(msg),
            Error::Convergence(_)
            | Error::NotPositiveDefinite { .. }
            | Error::SpaceMismatch { .. }
            | Error::ZeroVariance(_)
            | Error::RankDeficient { .. } => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
