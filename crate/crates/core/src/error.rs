use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: expected dimension {expected}, found {found}")]
    RowDimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("item pool is empty")]
    EmptyPool,
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("labels must contain both classes")]
    DegenerateLabels,
    #[error("rank deficient fit: {0}")]
    RankDeficient(String),
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("response kind does not match query kind {0}")]
    KindMismatch(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("item {0:?} has no score statistics")]
    MissingScoreStats(String),
    #[error("infeasible query configuration: {0}")]
    Infeasible(String),
    #[error("no query configuration has a positive information rate")]
    NoFeasibleQuery,
    #[error("label query carries no information under the current belief")]
    ZeroInformation,
    #[error("invalid config: field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} is stopped")]
    SessionStopped(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("trace format: {0}")]
    TraceFormat(String),
}

pub type Result<V, E = Error> = std::result::Result<V, E>;
