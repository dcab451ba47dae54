//! Full record of a single run: states, actions, rewards, per-block policies
//! and (when an oracle is attached) per-block value gaps.

use crate::error::{Error, Result};
use crate::features::State;

/// Which decision algorithm produced a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dyadic,
    Full,
    Stationary,
    Bandit,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Dyadic,
        Algorithm::Full,
        Algorithm::Stationary,
        Algorithm::Bandit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dyadic => "dyadic",
            Algorithm::Full => "full",
            Algorithm::Stationary => "stationary",
            Algorithm::Bandit => "bandit",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dyadic" => Ok(Algorithm::Dyadic),
            "full" => Ok(Algorithm::Full),
            "stationary" => Ok(Algorithm::Stationary),
            "bandit" => Ok(Algorithm::Bandit),
            other => Err(Error::config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// The block policy an algorithm actually deployed, reduced to lookup tables
/// so the exact-DP oracle can evaluate it.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockPolicy {
    /// Warm-start block: every action an independent Bernoulli(0.5).
    Uniform,
    /// Greedy tables extracted from the block's sampled weight schedule:
    /// `low_actions[h][low_state]` for periods h = 1..=H.
    Greedy {
        a_high: usize,
        low_actions: Vec<Vec<u8>>,
    },
}

/// One period inside a block.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub low: State,
    pub a_low: usize,
    pub reward: f64,
}

/// Everything observed during one time block.
#[derive(Clone, Debug)]
pub struct BlockRecord {
    /// 1-based episode number.
    pub episode: usize,
    /// 1-based block number within the episode.
    pub block: usize,
    pub high: State,
    pub a_high: usize,
    pub steps: Vec<StepRecord>,
    pub block_reward: f64,
    pub policy: Option<BlockPolicy>,
    /// The relabeled reward assigned to this block's high-level record at the
    /// moment it was appended (hierarchical algorithm only).
    pub r_tilde_at_append: Option<f64>,
    /// Optimal block value at this block's initial state, when an oracle ran.
    pub v_star: Option<f64>,
    /// Value of the deployed block policy, when an oracle ran.
    pub v_policy: Option<f64>,
}

impl BlockRecord {
    pub fn regret(&self) -> Option<f64> {
        Some(self.v_star? - self.v_policy?)
    }
}

#[derive(Clone, Debug)]
pub struct RunHistory {
    pub algo: Algorithm,
    pub episodes: usize,
    pub blocks_per_episode: usize,
    pub periods: usize,
    pub records: Vec<BlockRecord>,
}

impl RunHistory {
    /// Running sum of per-block value gaps over the (episode, block) order.
    ///
    /// Errors when any block lacks oracle values.
    pub fn cumulative_regret(&self) -> Result<Vec<f64>> {
        let mut curve = Vec::with_capacity(self.records.len());
        let mut total = 0.0;
        for rec in &self.records {
            let gap = rec.regret().ok_or_else(|| {
                Error::invalid(format!(
                    "missing oracle values at episode {} block {}",
                    rec.episode, rec.block
                ))
            })?;
            total += gap;
            curve.push(total);
        }
        Ok(curve)
    }

    /// Sum of realized rewards per episode.
    pub fn episode_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.episodes];
        for rec in &self.records {
            totals[rec.episode - 1] += rec.block_reward;
        }
        totals
    }
}
