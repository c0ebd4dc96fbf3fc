use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("no valid rows in {0}")]
    NoValidRows(String),

    #[error("series too short: need at least {needed} values, got {actual}")]
    TooShort { needed: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no candidate order converged")]
    NoConvergedCandidate,

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("all {0} search trials diverged")]
    AllTrialsDiverged(usize),

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model failed on perturbation sample {index}: {source}")]
    ModelFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures caused by the numbers rather than by the data or
    /// the caller: divergence, singular systems, non-finite intermediates.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::Singular(_)
            | Error::NoConvergedCandidate
            | Error::Diverged { .. }
            | Error::AllTrialsDiverged(_) => true,
            Error::Window { source, .. } | Error::ModelFailure { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
