//! Preference-targeted Bayesian multi-objective optimization.
//!
//! Independent Gaussian-process surrogates model each objective; the
//! product of per-objective expected improvements below an adaptive
//! reference point (mEI) steers evaluations toward a user-chosen region of
//! the Pareto front, or toward the front center when no preference is
//! given. A Monte-Carlo multi-point extension (q-mEI) selects batches for
//! parallel evaluation, and a domination-uncertainty integral along the
//! Ideal–reference–Nadir line detects local convergence.

pub mod algorithm;
pub mod bench;
pub mod cli;
pub mod convergence;
pub mod criteria;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod pareto;
pub mod rng;
pub mod search;
pub mod targeting;

pub use error::{Error, Result};
pub use pareto::{BoxDomain, BrokenLine, Design, EmpiricalFront, ObjectiveVector};
