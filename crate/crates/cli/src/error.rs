use std::fmt;
use std::path::Path;

use coopra_learn::LearnError;

/// Exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Model = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Data,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with the pipeline stage that failed.
    pub fn in_stage(self, stage: &str) -> Self {
        CliError {
            kind: self.kind,
            message: format!("stage {stage}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<coopra_core::Error> for CliError {
    fn from(e: coopra_core::Error) -> Self {
        Self::data(e.to_string())
    }
}

/// Hyperparameters come from the command line (`--params`, `--cv`), so a
/// rejected one is a usage error.
fn is_hyperparameter_error(e: &LearnError) -> bool {
    match e {
        LearnError::Hyperparameter(_) => true,
        LearnError::Fold { source, .. } | LearnError::Candidate { source, .. } => is_hyperparameter_error(source),
        LearnError::GridFailed { first, .. } => is_hyperparameter_error(first),
        _ => false,
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        let kind = if is_hyperparameter_error(&e) {
            ExitKind::Usage
        } else if e.is_data_error() {
            ExitKind::Data
        } else {
            ExitKind::Model
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}
