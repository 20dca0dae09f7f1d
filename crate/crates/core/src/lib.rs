//! Survival-prediction learners and a benchmark harness for right-censored,
//! group-structured data.
//!
//! The crate provides three families of learners for the Cox proportional
//! hazards setting — penalized regression ([`penalized`]), statistical
//! boosting ([`boosting`]) and random survival forests ([`forest`]) — together
//! with the shared partial-likelihood machinery ([`cox`]), censoring-aware
//! evaluation metrics ([`metrics`]) and a repeated cross-validation benchmark
//! harness ([`harness`]).
//!
//! Datasets carry a named partition of the feature columns into groups
//! (e.g. one clinical block plus several molecular blocks); learners either
//! ignore that structure, use it, or additionally favor the clinical block.
//! All fitting and resampling is deterministic given a seed.

pub mod boosting;
pub mod cox;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod harness;
pub mod metrics;
pub mod penalized;
pub mod rng;
pub mod stepfn;
pub mod synthetic;

pub use dataset::{
    load_dataset, standardize, stratified_folds, FeatureGroupMap, FoldAssignment,
    SurvivalDataset, SurvivalOutcome,
};
pub use error::{DataError, FitError};
pub use stepfn::StepFunction;
