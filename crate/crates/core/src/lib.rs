//! Optimal sampling-rate allocation for sources assigning tasks to
//! exhaustible workers.
//!
//! A source probes each worker with an independent Poisson sampling process
//! and assigns a task whenever the probe finds the worker in an assignable
//! state. Processing a task exhausts the worker: it drops into a recovery
//! ladder where climbing back to full efficiency is slow. Each worker is a
//! five-state continuous-time Markov chain over states `(1, 2, 3, 1*, 2*)`
//! parameterized by a recovery rate `lambda` and an exhaustion rate `mu`.
//!
//! The crate provides:
//!
//! - [`worker`] — worker parameters, generator matrices, stationary
//!   distributions, and the two task-success-rate objectives;
//! - [`strict`] — exact water-filling solver for the budgeted
//!   assign-only-at-peak-efficiency problem;
//! - [`moderate`] — simplicial branch-and-bound for the non-convex
//!   sum-of-ratios objective that also assigns in moderately efficient
//!   states, plus the alternating rate/probability optimizer;
//! - [`oracle`] — grid-search dynamic-programming verifiers and KKT
//!   certificate checks;
//! - [`sim`] — discrete-event Monte-Carlo simulator validating the
//!   stationary analysis and both objectives.

pub mod moderate;
pub mod oracle;
pub mod sim;
pub mod strict;
pub mod worker;

use thiserror::Error;

/// Errors produced by allocation, analysis, and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Worker exhaustion rate exceeds its recovery rate; rejected unless
    /// explicitly permitted via [`worker::WorkerParams::allow_unstable`].
    #[error(
        "exhaustion rate mu = {mu} exceeds recovery rate lambda = {lambda}; \
         use an unstable-worker constructor to permit this"
    )]
    UnstableWorker { lambda: f64, mu: f64 },

    /// The chain's balance system was rank-deficient beyond the single
    /// expected null direction and no supported fallback applied.
    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    /// A numeric guarantee (residual, certificate) could not be met.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A sum-of-ratios problem violated the bound contract (for example a
    /// nonpositive denominator lower bound).
    #[error("invalid sum-of-ratios problem: {0}")]
    InvalidProblem(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use moderate::{
    alternating_solve, branch_and_bound, initial_simplex, optimize_p_given_alpha,
    AlternatingOptions, AlternatingReport, BnBOptions, BnBReport, NodeSelection, Simplex,
    SumOfRatiosProblem,
};
pub use oracle::{oracle_moderate, oracle_strict, verify_kkt, GridSpec, KktReport};
pub use sim::{simulate_system, simulate_worker, SimConfig, SimStats};
pub use strict::{solve_strict, StrictSolution};
pub use worker::{AssignmentMode, Policy, StationaryDistribution, WorkerParams};
