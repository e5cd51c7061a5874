//! Estimation of generalized average treatment effects on the treated
//! (GATTs) under longitudinal modified treatment policies.
//!
//! Substitution, weighted and targeted minimum-loss estimators are built on
//! cross-fitted sequential regressions, conditioning probabilities and
//! Riesz-representer weights. [`simlab`] holds data-generating processes,
//! truth oracles and a replication harness.

pub mod conditioning;
pub mod config;
pub mod error;
pub mod estimators;
pub mod frame;
pub mod learners;
pub mod policy;
pub mod riesz;
pub mod rng;
pub mod simlab;
pub mod task;

pub use conditioning::{conditioning_indicator, validate_comparability, Comparability, ConditioningSpec, TreatmentSet};
pub use error::{GattError, Result};
pub use frame::{CovariateBlock, LongitudinalFrame, OutcomeFamily};
pub use policy::{PolicyRule, PolicySpec};
pub use task::{EstimatorKind, TaskSpec};
