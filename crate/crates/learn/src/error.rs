use std::path::PathBuf;

pub type Result<T, E = LearnError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),

    #[error("column mismatch: model was trained on {expected:?}, got {got:?}")]
    ColumnMismatch { expected: Vec<String>, got: Vec<String> },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("SMO stopped after {iterations} iterations with KKT violation {violation:.3e}")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<LearnError>,
    },

    #[error("candidate {candidate:?}: {source}")]
    Candidate {
        candidate: String,
        #[source]
        source: Box<LearnError>,
    },

    #[error("all {cells} grid cells failed; first error: {first}")]
    GridFailed { cells: usize, first: Box<LearnError> },

    #[error("{path}: {message}")]
    ModelFile { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Data(#[from] coopra_core::Error),
}

impl LearnError {
    /// True when the failure lies in the input data or its shape rather than
    /// in model training.
    pub fn is_data_error(&self) -> bool {
        match self {
            LearnError::ColumnMismatch { .. }
            | LearnError::Contract(_)
            | LearnError::ModelFile { .. }
            | LearnError::Io { .. }
            | LearnError::Data(_)
            | LearnError::Undefined(_) => true,
            LearnError::Fold { source, .. } | LearnError::Candidate { source, .. } => {
                source.is_data_error()
            }
            LearnError::GridFailed { first, .. } => first.is_data_error(),
            _ => false,
        }
    }
}
