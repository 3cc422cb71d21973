use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("distribution is not normalized (sum = {sum})")]
    NotNormalized { sum: f64 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("attention ledger is empty (total attention is zero)")]
    EmptyLedger,
    #[error("optimal length must be positive, got {0}")]
    NonPositiveZ(f64),
    #[error("hypothesis is not finished")]
    Unfinished,
    #[error("hypothesis has zero generated length")]
    ZeroLength,
    #[error("penalty kind {kind} does not accept this input shape")]
    WrongInputShape { kind: &'static str },
    #[error("prefix of length {len} exceeds the model horizon {horizon}")]
    PrefixTooLong { len: usize, horizon: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid source document: {0}")]
    InvalidSource(String),
    #[error("invalid reference: {0}")]
    InvalidReference(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no hypothesis could be produced")]
    NoHypothesis,
    #[error("search space of {count} sequences exceeds the limit {limit}")]
    SearchSpaceTooLarge { count: u128, limit: u128 },
    #[error("invalid block schedule: {0}")]
    InvalidSchedule(String),
    #[error("source has no feature vectors")]
    MissingFeatures,
    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("reference is empty")]
    EmptyReference,
    #[error("hypothesis is empty")]
    EmptyHypothesis,
    #[error("result set is empty")]
    EmptySet,
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
