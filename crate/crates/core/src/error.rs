use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by ingestion, graph construction, the solvers and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Parse(String),

    #[error("duplicate observation for station {station} at {timestamp}")]
    DuplicateObservation { timestamp: String, station: String },

    #[error("station {0} appears in the observations but not in the metadata")]
    UnknownStation(String),

    #[error("duplicate station id {0} in metadata")]
    DuplicateStation(String),

    #[error("timestamps are not monotone: {current} follows {previous}")]
    NonMonotoneTimestamps { previous: String, current: String },

    #[error("timestamp {0} is not on the 10-minute grid")]
    OffGrid(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("stations {0} and {1} have identical coordinates")]
    CoincidentStations(String, String),

    #[error("observed entry ({row}, {col}) is not finite")]
    NonFiniteObservation { row: usize, col: usize },

    #[error(
        "singular {side} subproblem: index {index} has {count} observations with rank {rank} and no regularization"
    )]
    SingularSubproblem {
        side: &'static str,
        index: usize,
        count: usize,
        rank: usize,
    },

    #[error("entry ({row}, {col}) cannot be completed: no station observed at that row")]
    Uncompletable { row: usize, col: usize },

    #[error("mask references unobserved entry ({row}, {col})")]
    MaskOnUnobserved { row: usize, col: usize },

    #[error("could not place holdout runs: {0}")]
    MaskPlacement(String),

    #[error("need {needed} gap-free weeks, found {found}")]
    InsufficientWeeks { needed: usize, found: usize },

    #[error("empty holdout set")]
    EmptyHoldout,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
