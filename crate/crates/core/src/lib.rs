//! Markov boundary discovery by conditional-entropy minimization.
//!
//! The library provides two interchangeable scoring paths for the greedy
//! grow/shrink search:
//!
//! - a closed-form Gaussian conditional entropy over (sample or analytic)
//!   covariance matrices, for linear data, and
//! - a Monte-Carlo estimator backed by FANS, an any-subset masked
//!   autoregressive flow whose dynamic weight masks let a single trained
//!   model score `H(T|S)` for arbitrary targets and conditioning subsets.
//!
//! Alongside the search sit synthetic SEM benchmark generators, ground-truth
//! graph utilities (Markov boundaries, moral graphs), error-bound
//! diagnostics, and ranked-list evaluation metrics.

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod flow;
pub mod gauss;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod search;
pub mod synth;

pub use error::{CoreError, Result};
