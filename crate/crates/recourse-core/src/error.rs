//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by training, geometry, and recourse operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A feature vector's length does not match the schema dimension.
    SchemaMismatch { expected: usize, got: usize },
    /// The schema itself is malformed (empty, duplicate names, bad bounds).
    InvalidSchema(String),
    /// A training or query configuration failed validation.
    InvalidConfig(String),
    /// Training data contains a single class only.
    DegenerateTrainingSet,
    /// A feature value lies outside its declared `[lower, upper]` domain.
    OutOfDomain { feature: usize, value: f64 },
    /// A partition index is outside `[1, m_i]` for its feature.
    PartitionOutOfRange { feature: usize, partition: u32 },
    /// Rectangle enumeration would exceed the caller-supplied point cap.
    RectTooLarge { points: u128, cap: u64 },
    /// No candidate target exists: no expert rectangle survives pruning,
    /// or a density search was handed an empty pool.
    NoSolution,
    /// The query is already classified into the desired class.
    AlreadyExpert { f: f64 },
    /// A serialized forest could not be parsed or failed validation.
    /// The payload names the offending location (line/column for syntax
    /// errors, a node path such as `trees[2].split.l` for semantic ones).
    MalformedForest(String),
    /// A metric was requested over an empty result set.
    UndefinedMetric,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SchemaMismatch { expected, got } => {
                write!(f, "schema mismatch: expected {expected} features, got {got}")
            }
            Error::InvalidSchema(msg) => write!(f, "invalid schema: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::DegenerateTrainingSet => write!(f, "degenerate training set: single class"),
            Error::OutOfDomain { feature, value } => {
                write!(f, "value {value} of feature {feature} is outside its domain")
            }
            Error::PartitionOutOfRange { feature, partition } => {
                write!(f, "partition {partition} out of range for feature {feature}")
            }
            Error::RectTooLarge { points, cap } => {
                write!(f, "rectangle holds {points} lattice points, cap is {cap}")
            }
            Error::NoSolution => write!(f, "no candidate solution for this query"),
            Error::AlreadyExpert { f: p } => {
                write!(f, "query already classified expert (F = {p})")
            }
            Error::MalformedForest(msg) => write!(f, "malformed forest document: {msg}"),
            Error::UndefinedMetric => write!(f, "metric undefined over empty results"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
