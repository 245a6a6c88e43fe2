use thiserror::Error;

/// Errors produced by model construction, policy solving and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("negative entry {value} in {what} at ({row}, {col})")]
    NegativeEntry {
        what: String,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("column {column} of {what} sums to {sum}, not 1")]
    NotStochastic {
        what: String,
        column: usize,
        sum: f64,
    },

    #[error("{what} index {index} out of range (size {size})")]
    OutOfRange {
        what: String,
        index: usize,
        size: usize,
    },

    #[error("initial state {0} has zero prior mass")]
    ZeroPriorMass(usize),

    #[error("observation sequence has zero probability under the model")]
    ImpossibleObservation,

    #[error("work cap exceeded: {what} needs {needed} units, cap is {cap}")]
    WorkCapExceeded { what: String, needed: f64, cap: f64 },

    #[error("action set is empty")]
    EmptyActionSet,

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix exponential did not converge after {0} terms")]
    NonConvergence(usize),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("observed branch (action {action}, output {output}) was pruned as zero-probability")]
    PrunedBranch { action: usize, output: usize },

    #[error("lookup policy has no entry for prefix [{0}]")]
    PolicyIncomplete(String),

    #[error("horizon mismatch: policy built for n = {policy}, evaluation asked for n = {requested}")]
    HorizonMismatch { policy: usize, requested: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    pub(crate) fn out_of_range(what: impl Into<String>, index: usize, size: usize) -> Self {
        Error::OutOfRange {
            what: what.into(),
            index,
            size,
        }
    }

    pub(crate) fn work_cap(what: impl Into<String>, needed: f64, cap: f64) -> Self {
        Error::WorkCapExceeded {
            what: what.into(),
            needed,
            cap,
        }
    }
}
