//! Experiment harness for the adaptive primal-dual solvers in `apd-core`.
//!
//! Reads TOML experiment configs, fans seeds out over a thread pool, and
//! writes per-seed CSV curves, cross-seed aggregates, JSON summaries and, for
//! the analytic testbed, bound certificates.

pub mod aggregate;
pub mod config;
mod error;
pub mod experiment;
pub mod records;

pub use error::{HarnessError, Result};
