use thiserror::Error;

/// Errors produced by the simulation, estimation and design layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    #[error("sync window [{start}, {end}] s is not covered by the trajectory (last sample at {available} s)")]
    WindowOutOfBounds {
        start: f64,
        end: f64,
        available: f64,
    },

    #[error("invalid pair ({0}, {1})")]
    InvalidPair(usize, usize),

    #[error("inconsistent observation on pair ({i}, {j}): {reason}")]
    InconsistentObservation { i: usize, j: usize, reason: String },

    #[error("control coupling {last_upper} did not synchronize after {expansions} expansions")]
    Unsynchronizable { last_upper: f64, expansions: usize },

    #[error("feature schema mismatch: expected dimension {expected}, got {actual}")]
    SchemaMismatch { expected: usize, actual: usize },

    #[error("dataset generation starved: {synchronized} synchronized / {unsynchronized} unsynchronized after {attempts} attempts")]
    ClassStarvation {
        synchronized: usize,
        unsynchronized: usize,
        attempts: usize,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("design space exhausted")]
    Exhausted,

    #[error("pair ({0}, {1}) already performed")]
    AlreadyPerformed(usize, usize),

    #[error("mismatched design spaces: {0}")]
    MismatchedDesignSpace(String),

    #[error("{0}")]
    Io(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
