//! Simulation library for online learning in layered episodic MDPs with
//! heavy-tailed losses.
//!
//! The crate provides:
//!
//! - [`mdp`]: layered MDP structure, occupancy measures, value recursion,
//!   trajectory rollout, and a text instance format.
//! - [`polytope`]: the FTRL subproblem over the occupancy polytope with a
//!   fractional-power (Tsallis) regularizer, solved by Frank-Wolfe with a
//!   dynamic-programming vertex oracle.
//! - [`estimators`]: skipping (truncation) estimators for heavy-tailed bandit
//!   feedback, their bonuses and diagnostic shifted form.
//! - [`confidence`]: visit counters, doubling epochs, empirical transition
//!   models, Bernstein widths, and upper occupancy bounds.
//! - [`learners`]: the two episode-loop learners, one for known transitions
//!   and one that learns the transitions from data.
//! - [`envs`]: heavy-tailed loss models with certified moments, regime
//!   drivers (stochastic, adversarial, corrupted), and gap tables.
//! - [`oracles`]: independent brute-force references and lemma checkers used
//!   by the test suite.
//! - [`harness`] and [`config`]: the experiment runner, shape fitting,
//!   exports, and the TOML configuration schema behind the `htmdp` CLI.
//!
//! Everything is desk-scale by design: dense tables, exact expectations where
//! the math allows, and reproducible seeded randomness everywhere else.

pub mod config;
pub mod confidence;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod learners;
pub mod mdp;
pub mod oracles;
pub mod polytope;

pub use error::{Error, Result};

/// Compiles and runs the guide's code samples as doc-tests, so the book in
/// `book/` can never drift from the library. Chapters appear here in the
/// book's reading order; pages without Rust samples are left out.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    pub mod overview {}
    #[doc = include_str!("../../../book/src/layered-mdps.md")]
    pub mod layered_mdps {}
    #[doc = include_str!("../../../book/src/heavy-tails.md")]
    pub mod heavy_tails {}
    #[doc = include_str!("../../../book/src/ftrl-solver.md")]
    pub mod ftrl_solver {}
    #[doc = include_str!("../../../book/src/unknown-transitions.md")]
    pub mod unknown_transitions {}
    #[doc = include_str!("../../../book/src/harness.md")]
    pub mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
