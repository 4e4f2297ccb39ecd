use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("dataset has no instances")]
    EmptyDataset,

    #[error("missing values in rows {rows:?}")]
    MissingValues { rows: Vec<usize> },

    #[error("invalid conjunction: {0}")]
    InvalidConjunction(String),

    #[error("predicate not indexed by dataset: {0}")]
    UnknownPredicate(String),

    #[error("instance index {index} out of range ({len} instances)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("oracle protocol error: {msg}; payload: {payload}")]
    Protocol { msg: String, payload: String },

    #[error("label error: {0}")]
    Label(String),

    #[error("no candidate conjunctions: {0}")]
    EmptyCandidates(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("refusing exhaustive search over an estimated {0} subsets")]
    SearchTooLarge(u128),

    #[error("instance error: {0}")]
    Instance(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
