//! Environment interface shared by the toy mazes and the mobile-health test
//! bed.
//!
//! The interaction protocol per episode is: `begin_episode`, then for each
//! block `begin_block` (which reveals the high-level state), `set_high_action`,
//! then `periods` repetitions of `low_state`/`apply_low`, then `end_block`.
//! The one wrinkle: `low_state` may be queried *before* `set_high_action`,
//! because the flat baselines choose the high and first low action jointly
//! after seeing the first low state.
//!
//! Environments own their random source and consume a fixed number of draws
//! per step regardless of the actions taken, so runs with the same seed can
//! be coupled across different policies.

pub mod maze;
pub mod testbed;

use crate::features::{FeatureScheme, State};

pub trait BlockEnv {
    /// Feature layout agents should use against this environment.
    fn scheme(&self) -> FeatureScheme;

    fn blocks_per_episode(&self) -> usize;

    fn periods_per_block(&self) -> usize;

    /// Resets per-episode state (e.g. draws a new dyad, clears tiredness).
    fn begin_episode(&mut self);

    /// Starts a block and returns the high-level state.
    fn begin_block(&mut self) -> State;

    /// Commits the block's high-level action. Must be called exactly once per
    /// block, before the first `apply_low`.
    fn set_high_action(&mut self, a_high: usize);

    /// The current period's low-level state.
    fn low_state(&self) -> State;

    /// Executes a low-level action, returns the realized reward and advances
    /// to the next period.
    fn apply_low(&mut self, a_low: usize) -> f64;

    /// Closes the block (e.g. runs the weekly transition).
    fn end_block(&mut self);
}
