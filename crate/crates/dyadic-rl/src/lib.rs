//! Hierarchical Bayesian reinforcement learning for problems where a
//! block-scale action (e.g. a weekly intervention) frames a sequence of
//! period-scale actions (e.g. daily interventions), plus the simulation
//! harness used to benchmark it.
//!
//! The crate provides:
//!
//! - randomized least-squares value iteration and Thompson sampling built on
//!   Bayesian ridge regression ([`bayes`], [`agents`]);
//! - the hierarchical two-level algorithm and three flat baselines
//!   ([`agents::run_algorithm`]);
//! - toy maze environments with weather context, dense/sparse rewards and a
//!   tiredness-mediated delayed effect ([`env::maze`]);
//! - a synthetic dyadic mobile-health test bed with burden-mediated treatment
//!   effects ([`env::testbed`]);
//! - an exact-DP regret oracle, experiment orchestration and CSV outputs
//!   ([`eval`]).

pub mod agents;
pub mod bayes;
pub mod error;
pub mod eval;
pub mod env;
pub mod features;
pub mod history;
pub mod seeding;
pub mod stats;

pub use error::{Error, Result};
