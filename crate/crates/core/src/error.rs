//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while loading or validating datasets and fold assignments.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Manifest(String),
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("observation {id}: non-positive time {time}")]
    NonPositiveTime { id: String, time: f64 },
    #[error("observation {id}: event indicator must be 0 or 1, got {value}")]
    BadEventIndicator { id: String, value: String },
    #[error("zero events: at least one observed event is required")]
    ZeroEvents,
    #[error("missing value in {file} (row {row}, column {column})")]
    MissingValue {
        file: String,
        row: usize,
        column: String,
    },
    #[error("duplicate column name {name}")]
    DuplicateColumn { name: String },
    #[error("duplicate observation id {id} in {file}")]
    DuplicateId { id: String, file: String },
    #[error("observation id {id} missing from {file}")]
    IdMissing { id: String, file: String },
    #[error("group {name} is empty")]
    EmptyGroup { name: String },
    #[error("clinical group {name} does not name an existing group")]
    UnknownClinicalGroup { name: String },
    #[error("need at least 2 observations, got {n}")]
    TooFewObservations { n: usize },
    #[error("too few {class} observations for {k} folds (have {have}, need at least {k})")]
    TooFewForFolds {
        class: &'static str,
        k: usize,
        have: usize,
    },
    #[error("invalid fold count {k}: need k >= 2")]
    BadFoldCount { k: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Errors raised while fitting a learner. The harness converts these into
/// per-fold failure records rather than propagating them.
#[derive(Debug, Clone, Error)]
pub enum FitError {
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("coefficient bound exceeded (|beta| > {cap}); likely monotone likelihood")]
    CoefficientCap { cap: f64 },
    #[error("singular hessian")]
    SingularHessian,
    #[error("all inner cross-validation folds failed")]
    AllFoldsFailed,
    #[error("learner requires {0}")]
    Unsupported(String),
}
