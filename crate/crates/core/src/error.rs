//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The series is too short for the requested embedding / neighbor count.
    #[error("series too short: effective sample count {n_eff} (need > {min})")]
    SeriesTooShort { n_eff: usize, min: usize },

    /// A variable index does not exist in the dataset.
    #[error("variable index {index} out of range (dataset has {count} variables)")]
    IndexOutOfRange { index: usize, count: usize },

    /// A column is constant where nonzero variance is required.
    #[error("column '{column}' has zero variance")]
    ZeroVariance { column: String },

    /// Too many exactly coincident points for a meaningful neighbor search.
    #[error("degenerate input: {duplicates} of {rows} points have >= k exact duplicates")]
    DegenerateDuplicates { duplicates: usize, rows: usize },

    /// Regression target is constant; a forest cannot be grown on it.
    #[error("degenerate target: all target values are identical")]
    DegenerateTarget,

    /// A chaotic map escaped on every restart attempt.
    #[error("simulation diverged after {attempts} restart attempts")]
    DivergenceAfterRetries { attempts: usize },

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    DomainError(String),

    /// Matrix/series shapes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An aggregate was requested over nothing.
    #[error("empty input")]
    EmptyInput,

    /// A per-pair result map is missing an ordered pair.
    #[error("missing result for pair {driver} -> {response}")]
    MissingPair { driver: usize, response: usize },

    /// A stored run record lacks data needed for the requested report.
    #[error("incomplete record: {0}")]
    IncompleteRecord(String),

    /// Bad configuration or parameter value.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),
}
