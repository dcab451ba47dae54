//! Exact block MDP for the toy maze environments, assembled by enumerating
//! the movement kernel rather than by simulation, plus the per-block regret
//! oracle built on it.

use crate::env::maze::{
    maze_reward, maze_step_kernel, move_prob, MazeEnvConfig, MazeLayout, Pos, ToyVariant, Weather,
    MAZE_EASY, MAZE_HARD, N_CELLS,
};
use crate::error::{Error, Result};
use crate::eval::{optimal_block_values, uniform_policy_block_values, BlockMdp};
use crate::history::{BlockPolicy, RunHistory};

const N_WEATHER: usize = 2;
/// High-action slot values: easy, hard, or not yet chosen.
const N_SLOTS: usize = 3;
const SLOT_NA: usize = 2;
/// Low-state values: the grid cells plus a reserved "not started" level.
const N_LOWS: usize = N_CELLS + 1;
const LOW_NA: usize = N_CELLS;

fn composite_idx(weather: usize, slot: usize, low: usize) -> usize {
    (weather * N_SLOTS + slot) * N_LOWS + low
}

fn root_idx(weather: usize) -> usize {
    composite_idx(weather, SLOT_NA, LOW_NA)
}

/// Builds the horizon-(H+1) block MDP of a no-delayed-effect maze variant.
/// Period 0 chooses the maze; periods 1..=H move through it.
pub fn maze_block_mdp(variant: ToyVariant, periods_per_block: usize) -> Result<BlockMdp> {
    if variant.has_delayed_effect() {
        return Err(Error::invalid(
            "the block MDP oracle applies only to variants without delayed effects",
        ));
    }
    let h_low = periods_per_block;
    let periods = h_low + 1;
    let n_states = N_WEATHER * N_SLOTS * N_LOWS;
    let n_actions = 2;
    let mode = variant.reward_mode();
    let layouts = [MazeLayout::easy(mode), MazeLayout::hard(mode)];
    let start = layouts[0].start;

    let self_loop = |s: usize| vec![(s, 1.0)];
    let mut transitions = Vec::with_capacity(periods - 1);
    let mut rewards = Vec::with_capacity(periods);

    for h in 0..periods {
        let mut reward_level = vec![vec![0.0; n_actions]; n_states];
        let mut transition_level = if h + 1 < periods {
            vec![vec![Vec::new(); n_actions]; n_states]
        } else {
            Vec::new()
        };
        for weather in 0..N_WEATHER {
            let p = move_prob(variant, Weather::from_idx(weather), 0.0);
            for slot in 0..N_SLOTS {
                for low in 0..N_LOWS {
                    let s = composite_idx(weather, slot, low);
                    for a in 0..n_actions {
                        let (r, row) = if h == 0 {
                            if slot == SLOT_NA && low == LOW_NA {
                                // Root: choosing maze `a` places the agent at
                                // the start cell with zero reward.
                                (0.0, vec![(composite_idx(weather, a, start.idx()), 1.0)])
                            } else {
                                (0.0, self_loop(s))
                            }
                        } else if slot != SLOT_NA && low != LOW_NA {
                            let layout = &layouts[if slot == MAZE_HARD { MAZE_HARD } else { MAZE_EASY }];
                            let pos = Pos::from_idx(low);
                            if layout.is_obstacle(pos) {
                                (0.0, self_loop(s))
                            } else {
                                let kernel = maze_step_kernel(layout, pos, a, p);
                                let mean_r: f64 = kernel
                                    .iter()
                                    .map(|&(next, prob)| prob * maze_reward(layout, pos, next))
                                    .sum();
                                let row = kernel
                                    .into_iter()
                                    .map(|(next, prob)| (composite_idx(weather, slot, next.idx()), prob))
                                    .collect();
                                (mean_r, row)
                            }
                        } else {
                            (0.0, self_loop(s))
                        };
                        reward_level[s][a] = r;
                        if h + 1 < periods {
                            transition_level[s][a] = row;
                        }
                    }
                }
            }
        }
        rewards.push(reward_level);
        if h + 1 < periods {
            transitions.push(transition_level);
        }
    }

    let init = (0..N_WEATHER).map(|w| vec![(root_idx(w), 1.0)]).collect();
    let mdp = BlockMdp {
        periods,
        n_states,
        n_actions,
        transitions,
        rewards,
        init,
    };
    mdp.validate()?;
    Ok(mdp)
}

/// Per-block regret oracle for maze variants satisfying the block-bandit
/// structure exactly (no delayed effect).
pub struct MazeOracle {
    pub mdp: BlockMdp,
    v_star0: Vec<f64>,
    v_unif0: Vec<f64>,
    periods_per_block: usize,
    start_idx: usize,
}

impl MazeOracle {
    /// `Ok(None)` for variants where per-block optimality is ill-defined
    /// (delayed effects couple the blocks).
    pub fn for_config(cfg: &MazeEnvConfig) -> Result<Option<Self>> {
        if cfg.variant.has_delayed_effect() {
            return Ok(None);
        }
        let mdp = maze_block_mdp(cfg.variant, cfg.periods_per_block)?;
        let v_star0 = optimal_block_values(&mdp)?;
        let v_unif0 = uniform_policy_block_values(&mdp)?;
        let start_idx = MazeLayout::easy(cfg.variant.reward_mode()).start.idx();
        Ok(Some(MazeOracle {
            mdp,
            v_star0,
            v_unif0,
            periods_per_block: cfg.periods_per_block,
            start_idx,
        }))
    }

    /// Optimal block value at the block opening with the given weather.
    pub fn v_star(&self, weather: usize) -> f64 {
        self.v_star0[root_idx(weather)]
    }

    /// Exact value of a recorded block policy at the block opening.
    pub fn block_value(&self, weather: usize, policy: &BlockPolicy) -> Result<f64> {
        match policy {
            BlockPolicy::Uniform => Ok(self.v_unif0[root_idx(weather)]),
            BlockPolicy::Greedy { a_high, low_actions } => {
                if low_actions.len() != self.periods_per_block
                    || low_actions.iter().any(|t| t.len() != N_CELLS)
                {
                    return Err(Error::invalid("policy tables have the wrong shape"));
                }
                // Backward induction restricted to the reachable context
                // (weather, chosen maze); identical arithmetic to the full
                // sweep in `policy_block_value`.
                let slot = *a_high;
                let h_low = self.periods_per_block;
                let mut next = vec![0.0f64; N_CELLS];
                for h in (1..=h_low).rev() {
                    let mut cur = vec![0.0f64; N_CELLS];
                    for pos in 0..N_CELLS {
                        let s = composite_idx(weather, slot, pos);
                        let a = low_actions[h - 1][pos] as usize;
                        let mut v = self.mdp.rewards[h][s][a];
                        if h + 1 < self.mdp.periods {
                            for &(s2, p) in &self.mdp.transitions[h][s][a] {
                                v += p * next[s2 % N_LOWS];
                            }
                        }
                        cur[pos] = v;
                    }
                    next = cur;
                }
                Ok(next[self.start_idx])
            }
        }
    }

    /// Fills per-block `v_star`/`v_policy` for every record of a run.
    pub fn attach(&self, history: &mut RunHistory) -> Result<()> {
        for rec in history.records.iter_mut() {
            let weather = rec.high.idx();
            let policy = rec
                .policy
                .as_ref()
                .ok_or_else(|| Error::invalid("run was recorded without policies"))?;
            rec.v_star = Some(self.v_star(weather));
            rec.v_policy = Some(self.block_value(weather, policy)?);
        }
        Ok(())
    }
}
