//! Primal-dual subgradient methods for strongly convex optimization.
//!
//! This crate implements a switching proximal subgradient method for problems
//! of the form
//!
//! ```text
//!     minimize    f0(x) + r(x)
//!     subject to  f_s(x) <= 0,   s = 1..m
//! ```
//!
//! where every `f_s` is mu-strongly convex (possibly nonsmooth and
//! non-Lipschitz) and `r` is a simple term accessed through its proximal
//! operator. The same iterate sequence is also produced by an equivalent
//! dual-averaging scheme that aggregates the quadratic lower bounds seen so
//! far into a single model; maintaining that model alongside the primal
//! iterates yields computable dual lower bounds, duality-gap stopping
//! criteria, and Lagrange multiplier estimates at essentially no extra cost.
//!
//! Modules:
//! - [`schedule`]: stepsize/dual-weight algebra and canned schedules,
//! - [`model`]: exact aggregation of quadratic lower bounds in minimal form,
//! - [`problem`]: benchmark problem generators with ground-truth references,
//! - [`solver`]: the primal and dual iterations plus the run harness,
//! - [`certificates`]: gaps, stopping rules, divergence constants, and
//!   theoretical bound evaluators,
//! - [`num`]: compensated sums, log-space scalars, and seed derivation.

pub mod certificates;
pub mod model;
pub mod num;
pub mod problem;
pub mod schedule;
pub mod solver;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid model operation: {0}")]
    InvalidModel(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("missing reference data: {0}")]
    MissingReference(&'static str),
    #[error("divergence: iterate magnitude exceeded {limit:e} at iteration {iteration}")]
    Diverged { iteration: usize, limit: f64 },
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("undefined quantity: {0}")]
    Undefined(&'static str),
    #[error("invalid stopping criterion: {0}")]
    InvalidCriterion(String),
    #[error("step sizes never settle below the growth threshold (scanned {0} steps)")]
    UnsettledSchedule(usize),
    #[error("reference gap history holds {have} entries but the growth phase needs {needed}")]
    InsufficientHistory { needed: usize, have: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
