//! Adaptive primal-dual (APD) optimization for constrained Markov decision
//! processes.
//!
//! The crate is organised bottom-up:
//!
//! - [`cmdp`]: the CMDP abstraction, trajectory sampling and Monte-Carlo
//!   estimates of the discounted return and costs.
//! - [`envs`]: point-mass Run/Circle tasks and a tabular gridworld.
//! - [`tabular`]: exact dynamic-programming policy evaluation for tabular models.
//! - [`policy`]: tabular-softmax and linear-Gaussian policies with exact score functions.
//! - [`lagrangian`]: Lagrangian value, REINFORCE gradient, GAE and the PPO-Lagrangian surrogate.
//! - [`schedule`]: primal learning-rate rules (constant, InvLin, InvQua).
//! - [`dual`]: projected dual ascent and the PID-Lagrangian controller.
//! - [`testbed`]: a strongly convex quadratic program with closed-form oracles.
//! - [`solver`]: the APD and PAPD loops.
//! - [`certificate`]: numerical checks of the convergence, primal-error and
//!   feasibility bounds on recorded runs.

pub mod certificate;
pub mod cmdp;
pub mod dual;
pub mod envs;
mod error;
pub mod lagrangian;
pub mod policy;
pub mod schedule;
pub mod solver;
pub mod tabular;
pub mod testbed;

pub use error::{Error, Result};
