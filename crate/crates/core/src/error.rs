use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed parameter file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize parameters: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid parameters:\n{0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameters:\n{0}")]
    InvalidParams(ValidationReport),
    #[error("gamma vanishes at step {k} ({gamma:e})")]
    SingularGamma { k: usize, gamma: f64 },
    #[error("step {k} outside 0..={last}")]
    StepOutOfRange { k: usize, last: usize },
    #[error("parameters are not symmetric: {0}")]
    NotSymmetric(String),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid demand specification: {0}")]
    InvalidDemand(String),
    #[error("{side} side {field}: implied {implied} differs from target {target}")]
    MomentMismatch {
        side: &'static str,
        field: &'static str,
        target: f64,
        implied: f64,
    },
    #[error("target mu_cp {target} outside attainable range [{lo}, {hi}]")]
    UnattainableCorrelation { target: f64, lo: f64, hi: f64 },
    #[error("brute force rejected the market: {0}")]
    BruteForce(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum LobError {
    #[error("event {index}: unknown order reference {order_ref}")]
    UnknownOrder { index: usize, order_ref: u64 },
    #[error("event {index}: order reference {order_ref} already live")]
    DuplicateOrder { index: usize, order_ref: u64 },
    #[error("event {index} (ts {ts_ns}): {reason}")]
    Inconsistent {
        index: usize,
        ts_ns: i64,
        reason: String,
    },
    #[error("one-sided book")]
    OneSided,
    #[error("empty book side")]
    EmptySide,
    #[error("malformed event record {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient history: day {day} needs {need} prior days, {have} available")]
    InsufficientHistory {
        day: usize,
        need: usize,
        have: usize,
    },
    #[error(transparent)]
    Lob(#[from] LobError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("policy {0} needs a coefficient table")]
    MissingTable(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("only {have} usable days for a {window}-day window")]
    InsufficientDays { have: usize, window: usize },
    #[error(transparent)]
    Lob(#[from] LobError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
