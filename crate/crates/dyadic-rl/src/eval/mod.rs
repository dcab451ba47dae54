//! Evaluation harness: exact finite-horizon dynamic programming for the
//! per-block MDP, regret accounting, the theory hyperparameter schedule,
//! experiment orchestration and aggregation.

pub mod experiment;
pub mod oracle;

use crate::error::{Error, Result};
use crate::history::RunHistory;

/// Sparse categorical distribution over next states.
pub type TransitionRow = Vec<(usize, f64)>;

/// A finite-horizon block MDP with decision periods 0..periods-1. Period 0 is
/// the high-level action; the remaining periods are low-level actions.
#[derive(Clone, Debug)]
pub struct BlockMdp {
    /// Number of decision periods (the block horizon H plus one).
    pub periods: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// `transitions[h][s][a]` lists (next state, probability) pairs for
    /// h = 0..periods-2; the final period needs no transitions.
    pub transitions: Vec<Vec<Vec<TransitionRow>>>,
    /// `rewards[h][s][a]`: mean reward, for h = 0..periods-1.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// Initial-state distribution conditioned on the high-level state:
    /// `init[high]` lists (state, probability) pairs.
    pub init: Vec<TransitionRow>,
}

impl BlockMdp {
    /// Checks tensor shapes and that transition rows sum to one.
    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 || self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::invalid("block MDP must have positive dimensions"));
        }
        if self.rewards.len() != self.periods {
            return Err(Error::invalid("reward tensor must cover every period"));
        }
        if self.transitions.len() + 1 != self.periods {
            return Err(Error::invalid(
                "transition tensor must cover every period except the last",
            ));
        }
        for (h, per_state) in self.rewards.iter().enumerate() {
            if per_state.len() != self.n_states
                || per_state.iter().any(|row| row.len() != self.n_actions)
            {
                return Err(Error::invalid(format!("reward tensor malformed at period {h}")));
            }
            if per_state
                .iter()
                .any(|row| row.iter().any(|r| !r.is_finite()))
            {
                return Err(Error::invalid(format!("non-finite reward at period {h}")));
            }
        }
        for (h, per_state) in self.transitions.iter().enumerate() {
            if per_state.len() != self.n_states
                || per_state.iter().any(|row| row.len() != self.n_actions)
            {
                return Err(Error::invalid(format!(
                    "transition tensor malformed at period {h}"
                )));
            }
            for row in per_state.iter().flatten() {
                let total: f64 = row.iter().map(|&(_, p)| p).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "transition row sums to {total} at period {h}"
                    )));
                }
                if row.iter().any(|&(s, p)| s >= self.n_states || p < 0.0) {
                    return Err(Error::invalid(format!(
                        "transition row has invalid entries at period {h}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A deterministic policy: one state-to-action map per period.
#[derive(Clone, Debug)]
pub struct BlockPolicySpec {
    pub actions: Vec<Vec<usize>>,
}

/// Optimal values V* at period 0 per state, by exact backward induction.
pub fn optimal_block_values(mdp: &BlockMdp) -> Result<Vec<f64>> {
    mdp.validate()?;
    let mut next = vec![0.0f64; mdp.n_states];
    for h in (0..mdp.periods).rev() {
        let mut cur = vec![f64::NEG_INFINITY; mdp.n_states];
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let mut q = mdp.rewards[h][s][a];
                if h + 1 < mdp.periods {
                    for &(s2, p) in &mdp.transitions[h][s][a] {
                        q += p * next[s2];
                    }
                }
                if q > cur[s] {
                    cur[s] = q;
                }
            }
        }
        next = cur;
    }
    Ok(next)
}

/// Value of a deterministic policy at period 0 per state, by exact backward
/// induction.
pub fn policy_block_value(mdp: &BlockMdp, policy: &BlockPolicySpec) -> Result<Vec<f64>> {
    mdp.validate()?;
    if policy.actions.len() != mdp.periods {
        return Err(Error::invalid(format!(
            "policy covers {} periods, expected {}",
            policy.actions.len(),
            mdp.periods
        )));
    }
    for (h, per_state) in policy.actions.iter().enumerate() {
        if per_state.len() != mdp.n_states {
            return Err(Error::invalid(format!("policy incomplete at period {h}")));
        }
        if per_state.iter().any(|&a| a >= mdp.n_actions) {
            return Err(Error::invalid(format!("policy action out of range at period {h}")));
        }
    }
    let mut next = vec![0.0f64; mdp.n_states];
    for h in (0..mdp.periods).rev() {
        let mut cur = vec![0.0f64; mdp.n_states];
        for s in 0..mdp.n_states {
            let a = policy.actions[h][s];
            let mut v = mdp.rewards[h][s][a];
            if h + 1 < mdp.periods {
                for &(s2, p) in &mdp.transitions[h][s][a] {
                    v += p * next[s2];
                }
            }
            cur[s] = v;
        }
        next = cur;
    }
    Ok(next)
}

/// Value of the uniform-random policy at period 0 per state; this is the
/// policy deployed during warm-start episodes.
pub fn uniform_policy_block_values(mdp: &BlockMdp) -> Result<Vec<f64>> {
    mdp.validate()?;
    let frac = 1.0 / mdp.n_actions as f64;
    let mut next = vec![0.0f64; mdp.n_states];
    for h in (0..mdp.periods).rev() {
        let mut cur = vec![0.0f64; mdp.n_states];
        for s in 0..mdp.n_states {
            let mut v = 0.0;
            for a in 0..mdp.n_actions {
                let mut q = mdp.rewards[h][s][a];
                if h + 1 < mdp.periods {
                    for &(s2, p) in &mdp.transitions[h][s][a] {
                        q += p * next[s2];
                    }
                }
                v += frac * q;
            }
            cur[s] = v;
        }
        next = cur;
    }
    Ok(next)
}

/// Running sum of per-block value gaps over a run, in (episode, block) order.
pub fn cumulative_regret(history: &RunHistory) -> Result<Vec<f64>> {
    history.cumulative_regret()
}

/// Visit-count hyperparameter schedule:
/// λ = ½ H³ |S| log(2 H |S| |A| N) and σ = 1/√λ.
pub fn theory_hyperparams(
    horizon: usize,
    size_s: usize,
    size_a: usize,
    visits: usize,
) -> Result<(f64, f64)> {
    if horizon == 0 || size_s == 0 || size_a == 0 || visits == 0 {
        return Err(Error::invalid(
            "theory schedule needs positive horizon, sizes and visit count",
        ));
    }
    let (h, s, a, n) = (horizon as f64, size_s as f64, size_a as f64, visits as f64);
    let lambda = 0.5 * h.powi(3) * s * (2.0 * h * s * a * n).ln();
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Numeric(format!(
            "theory schedule produced non-positive lambda {lambda}"
        )));
    }
    Ok((lambda, 1.0 / lambda.sqrt()))
}

/// Mean curve and standard errors across repetitions.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSummary {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// Pointwise mean and standard error over equally long series. A single
/// repetition gets SE = 0 by convention.
pub fn aggregate(series: &[Vec<f64>]) -> Result<SeriesSummary> {
    let first = series
        .first()
        .ok_or_else(|| Error::invalid("aggregate needs at least one repetition"))?;
    let len = first.len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::invalid("repetitions have unequal lengths"));
    }
    let n = series.len() as f64;
    let mut mean = vec![0.0; len];
    for s in series {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut se = vec![0.0; len];
    if series.len() > 1 {
        for s in series {
            for (e, (v, m)) in se.iter_mut().zip(s.iter().zip(&mean)) {
                *e += (v - m) * (v - m);
            }
        }
        for e in se.iter_mut() {
            *e = (*e / (n - 1.0) / n).sqrt();
        }
    }
    Ok(SeriesSummary { mean, se })
}
