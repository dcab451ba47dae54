//! Executes one run of a decision algorithm against an environment,
//! producing the full history the evaluation harness consumes.

use rand::Rng;

use crate::agents::{
    q_max_low, relabel_high_rewards, rlsvi_fit, select_action, select_high_action,
    select_joint_action, stationary_rlsvi_fit, ts_fit, ts_fit_rows, AgentConfig, HighRecord,
    HyperMode, LowEpisode, LowStep, TieBreak,
};
use crate::env::BlockEnv;
use crate::error::{Error, Result};
use crate::eval::theory_hyperparams;
use crate::features::{FeatureScheme, FeatureVector, QKind, State};
use crate::history::{Algorithm, BlockPolicy, BlockRecord, RunHistory, StepRecord};

/// Options controlling what the runner records beyond the raw trajectory.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunnerOptions {
    /// Extract per-block greedy policy tables so an exact-DP oracle can score
    /// the deployed policies. Tabular feature schemes only.
    pub record_policies: bool,
}

/// Bookkeeping events exposed for tests that pin down the control flow, e.g.
/// that the high-level bandit is fitted strictly before the current block's
/// record is appended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    BlockStart { episode: usize, block: usize },
    TsFit { records: usize },
    RlsviFit { episodes: usize },
    StationaryFit { episodes: usize },
    BanditFit { rows: usize },
    Relabel { records: usize },
    HighAppend,
}

struct Recorder<'a> {
    events: Option<&'a mut Vec<TraceEvent>>,
}

impl Recorder<'_> {
    fn push(&mut self, event: TraceEvent) {
        if let Some(events) = self.events.as_deref_mut() {
            events.push(event);
        }
    }
}

/// Greedy action table over all low states for a fixed (high state, high
/// action) context. Deterministic lowest-index tie-breaking.
fn greedy_low_table(
    theta: &[f64],
    scheme: &FeatureScheme,
    kind: QKind,
    high_idx: usize,
    a_high: usize,
) -> Vec<u8> {
    let lows = scheme.low_states().expect("policy tables need a tabular scheme");
    let high = State::Idx(high_idx);
    (0..lows)
        .map(|l| {
            let low = State::Idx(l);
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0u8;
            for a in 0..scheme.low_actions() {
                let v = scheme.q_value(kind, &high, a_high, &low, a, theta);
                if v > best {
                    best = v;
                    best_a = a as u8;
                }
            }
            best_a
        })
        .collect()
}

struct HyperSchedule {
    mode: HyperMode,
    /// Visit counts per high-level state, for the theory schedule.
    counts: Vec<usize>,
    horizon: usize,
    size_s: usize,
    size_a: usize,
}

impl HyperSchedule {
    fn new(mode: HyperMode, scheme: &FeatureScheme, periods: usize) -> Result<Self> {
        let (counts, size_s, size_a) = match (mode, scheme) {
            (HyperMode::Theory, FeatureScheme::Tabular { high_states, high_actions, low_states, low_actions }) => {
                // Composite state space including the reserved NA levels for
                // the high action and low state slots.
                let size_s = high_states * (high_actions + 1) * (low_states + 1);
                let size_a = high_actions + low_actions;
                (vec![0usize; *high_states], size_s, size_a)
            }
            (HyperMode::Theory, _) => {
                return Err(Error::config(
                    "theory hyperparameter schedule requires a tabular environment",
                ));
            }
            (HyperMode::Fixed { .. }, _) => (Vec::new(), 0, 0),
        };
        Ok(HyperSchedule {
            mode,
            counts,
            horizon: periods,
            size_s,
            size_a,
        })
    }

    /// (λ, σ, λ_TS, σ_TS) for the block about to run, then counts the visit.
    fn block_params(&mut self, high_idx: usize) -> Result<(f64, f64, f64, f64)> {
        match self.mode {
            HyperMode::Fixed {
                lambda,
                sigma,
                lambda_ts,
                sigma_ts,
            } => Ok((lambda, sigma, lambda_ts, sigma_ts)),
            HyperMode::Theory => {
                let n = self.counts[high_idx];
                self.counts[high_idx] += 1;
                let (lambda, sigma) =
                    theory_hyperparams(self.horizon, self.size_s, self.size_a, n.max(1))?;
                Ok((lambda, sigma, lambda, sigma))
            }
        }
    }
}

fn validate_run(
    algo: Algorithm,
    env: &dyn BlockEnv,
    episodes: usize,
    blocks: usize,
    periods: usize,
    config: &AgentConfig,
    options: &RunnerOptions,
) -> Result<FeatureScheme> {
    config.validate()?;
    if episodes == 0 || blocks == 0 || periods == 0 {
        return Err(Error::invalid("episodes, blocks and periods must be positive"));
    }
    if env.blocks_per_episode() != blocks || env.periods_per_block() != periods {
        return Err(Error::invalid(format!(
            "environment provides {}x{} (blocks x periods) but the run requests {blocks}x{periods}",
            env.blocks_per_episode(),
            env.periods_per_block()
        )));
    }
    let scheme = env.scheme();
    if options.record_policies && !scheme.is_tabular() {
        return Err(Error::invalid(
            "policy recording requires a tabular feature scheme",
        ));
    }
    if matches!(config.hyper, HyperMode::Theory) && algo != Algorithm::Dyadic {
        return Err(Error::config(
            "the theory hyperparameter schedule is defined for the hierarchical algorithm only",
        ));
    }
    Ok(scheme)
}

/// Runs `algo` against `env` for `episodes` episodes of `blocks` blocks of
/// `periods` periods, returning the complete run history. Deterministic given
/// the environment's seed and `rng`.
#[allow(clippy::too_many_arguments)]
pub fn run_algorithm<R: Rng + ?Sized>(
    algo: Algorithm,
    env: &mut dyn BlockEnv,
    episodes: usize,
    blocks: usize,
    periods: usize,
    config: &AgentConfig,
    rng: &mut R,
    options: RunnerOptions,
    trace: Option<&mut Vec<TraceEvent>>,
) -> Result<RunHistory> {
    let scheme = validate_run(algo, env, episodes, blocks, periods, config, &options)?;
    let mut recorder = Recorder { events: trace };
    let mut history = RunHistory {
        algo,
        episodes,
        blocks_per_episode: blocks,
        periods,
        records: Vec::with_capacity(episodes * blocks),
    };
    match algo {
        Algorithm::Dyadic => run_dyadic(
            env, &scheme, episodes, blocks, periods, config, rng, &options, &mut recorder,
            &mut history,
        )?,
        Algorithm::Full => run_full(
            env, &scheme, episodes, blocks, periods, config, rng, &options, &mut recorder,
            &mut history,
        )?,
        Algorithm::Stationary => run_stationary(
            env, &scheme, episodes, blocks, periods, config, rng, &options, &mut recorder,
            &mut history,
        )?,
        Algorithm::Bandit => run_bandit(
            env, &scheme, episodes, blocks, periods, config, rng, &options, &mut recorder,
            &mut history,
        )?,
    }
    Ok(history)
}

#[allow(clippy::too_many_arguments)]
fn run_dyadic<R: Rng + ?Sized>(
    env: &mut dyn BlockEnv,
    scheme: &FeatureScheme,
    episodes: usize,
    blocks: usize,
    periods: usize,
    config: &AgentConfig,
    rng: &mut R,
    options: &RunnerOptions,
    recorder: &mut Recorder<'_>,
    history: &mut RunHistory,
) -> Result<()> {
    let mut schedule = HyperSchedule::new(config.hyper, scheme, periods)?;
    let mut data_high: Vec<HighRecord> = Vec::new();
    let mut data_low: Vec<LowEpisode> = Vec::new();

    for k in 1..=episodes {
        let warm = k <= config.warm_start_episodes;
        env.begin_episode();
        for w in 1..=blocks {
            recorder.push(TraceEvent::BlockStart { episode: k, block: w });
            let high = env.begin_block();
            let high_idx_for_theory = match (&config.hyper, &high) {
                (HyperMode::Theory, State::Idx(i)) => *i,
                _ => 0,
            };
            let (lambda, sigma, lambda_ts, sigma_ts) = schedule.block_params(high_idx_for_theory)?;

            recorder.push(TraceEvent::TsFit { records: data_high.len() });
            let beta = ts_fit(&data_high, scheme, lambda_ts, sigma_ts, rng)?;
            let a_high = if warm {
                rng.random_bool(0.5) as usize
            } else {
                select_high_action(&beta, scheme, &high, config.tie_break, rng)?
            };
            env.set_high_action(a_high);

            recorder.push(TraceEvent::RlsviFit { episodes: data_low.len() });
            let sched = rlsvi_fit(
                &data_low,
                scheme,
                QKind::DyadicLow,
                periods,
                None,
                lambda,
                sigma,
                rng,
            )?;

            let mut steps = Vec::with_capacity(periods);
            let mut low_steps = Vec::with_capacity(periods);
            let mut block_reward = 0.0;
            for h in 0..periods {
                let low = env.low_state();
                let a_low = if warm {
                    rng.random_bool(0.5) as usize
                } else {
                    select_action(
                        &sched.thetas[h],
                        scheme,
                        QKind::DyadicLow,
                        &high,
                        a_high,
                        &low,
                        config.tie_break,
                        rng,
                    )?
                };
                let reward = env.apply_low(a_low);
                block_reward += reward;
                steps.push(StepRecord { low: low.clone(), a_low, reward });
                low_steps.push(LowStep {
                    high: high.clone(),
                    a_high,
                    low,
                    a_low,
                    reward,
                });
            }
            let first_low = low_steps[0].low.clone();
            data_low.push(LowEpisode { steps: low_steps });

            recorder.push(TraceEvent::Relabel { records: data_high.len() });
            relabel_high_rewards(&mut data_high, &sched.thetas[0], scheme);
            let r_tilde =
                q_max_low(&sched.thetas[0], scheme, QKind::DyadicLow, &high, a_high, &first_low);
            data_high.push(HighRecord {
                high: high.clone(),
                a_high,
                r_tilde,
                first_low,
            });
            recorder.push(TraceEvent::HighAppend);
            env.end_block();

            let policy = options.record_policies.then(|| {
                if warm {
                    BlockPolicy::Uniform
                } else {
                    BlockPolicy::Greedy {
                        a_high,
                        low_actions: (0..periods)
                            .map(|h| {
                                greedy_low_table(
                                    &sched.thetas[h],
                                    scheme,
                                    QKind::DyadicLow,
                                    high.idx(),
                                    a_high,
                                )
                            })
                            .collect(),
                    }
                }
            });
            history.records.push(BlockRecord {
                episode: k,
                block: w,
                high,
                a_high,
                steps,
                block_reward,
                policy,
                r_tilde_at_append: Some(r_tilde),
                v_star: None,
                v_policy: None,
            });
        }
    }
    Ok(())
}

/// Shared stepping loop of the flat baselines: at the first period of each
/// block, the high and low actions are chosen jointly from a composite model;
/// afterwards only the low action is chosen. `theta_for` supplies the weight
/// vector used at a given flat period index.
#[allow(clippy::too_many_arguments)]
fn flat_episode<R: Rng + ?Sized>(
    env: &mut dyn BlockEnv,
    scheme: &FeatureScheme,
    episode: usize,
    blocks: usize,
    periods: usize,
    warm: bool,
    tie: TieBreak,
    rng: &mut R,
    mut theta_for: impl FnMut(usize, &mut R) -> Result<Vec<f64>>,
    options: &RunnerOptions,
    history: &mut RunHistory,
) -> Result<Vec<LowStep>> {
    let mut episode_steps: Vec<LowStep> = Vec::with_capacity(blocks * periods);
    env.begin_episode();
    for w in 1..=blocks {
        let high = env.begin_block();
        let mut a_high = 0usize;
        let mut steps = Vec::with_capacity(periods);
        let mut block_reward = 0.0;
        let mut block_thetas: Vec<Vec<f64>> = Vec::with_capacity(periods);
        for h in 0..periods {
            let low = env.low_state();
            let theta = theta_for((w - 1) * periods + h, rng)?;
            let a_low = if h == 0 {
                let (ah, al) = if warm {
                    (rng.random_bool(0.5) as usize, rng.random_bool(0.5) as usize)
                } else {
                    select_joint_action(&theta, scheme, &high, &low, tie, rng)?
                };
                a_high = ah;
                env.set_high_action(ah);
                al
            } else if warm {
                rng.random_bool(0.5) as usize
            } else {
                select_action(
                    &theta,
                    scheme,
                    QKind::Composite,
                    &high,
                    a_high,
                    &low,
                    tie,
                    rng,
                )?
            };
            let reward = env.apply_low(a_low);
            block_reward += reward;
            steps.push(StepRecord { low: low.clone(), a_low, reward });
            episode_steps.push(LowStep {
                high: high.clone(),
                a_high,
                low,
                a_low,
                reward,
            });
            if options.record_policies {
                block_thetas.push(theta);
            }
        }
        env.end_block();

        let policy = options.record_policies.then(|| {
            if warm {
                BlockPolicy::Uniform
            } else {
                BlockPolicy::Greedy {
                    a_high,
                    low_actions: block_thetas
                        .iter()
                        .map(|theta| {
                            greedy_low_table(theta, scheme, QKind::Composite, high.idx(), a_high)
                        })
                        .collect(),
                }
            }
        });
        history.records.push(BlockRecord {
            episode,
            block: w,
            high,
            a_high,
            steps,
            block_reward,
            policy,
            r_tilde_at_append: None,
            v_star: None,
            v_policy: None,
        });
    }
    Ok(episode_steps)
}

#[allow(clippy::too_many_arguments)]
fn run_full<R: Rng + ?Sized>(
    env: &mut dyn BlockEnv,
    scheme: &FeatureScheme,
    episodes: usize,
    blocks: usize,
    periods: usize,
    config: &AgentConfig,
    rng: &mut R,
    options: &RunnerOptions,
    recorder: &mut Recorder<'_>,
    history: &mut RunHistory,
) -> Result<()> {
    let (lambda, sigma) = match config.hyper {
        HyperMode::Fixed { lambda, sigma, .. } => (lambda, sigma),
        HyperMode::Theory => unreachable!("rejected in validate_run"),
    };
    let horizon = blocks * periods;
    let mut data: Vec<LowEpisode> = Vec::new();
    for k in 1..=episodes {
        let warm = k <= config.warm_start_episodes;
        recorder.push(TraceEvent::RlsviFit { episodes: data.len() });
        let sched = rlsvi_fit(
            &data,
            scheme,
            QKind::Composite,
            horizon,
            Some(periods),
            lambda,
            sigma,
            rng,
        )?;
        let steps = flat_episode(
            env,
            scheme,
            k,
            blocks,
            periods,
            warm,
            config.tie_break,
            rng,
            |t, _| Ok(sched.thetas[t].clone()),
            options,
            history,
        )?;
        data.push(LowEpisode { steps });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_stationary<R: Rng + ?Sized>(
    env: &mut dyn BlockEnv,
    scheme: &FeatureScheme,
    episodes: usize,
    blocks: usize,
    periods: usize,
    config: &AgentConfig,
    rng: &mut R,
    options: &RunnerOptions,
    recorder: &mut Recorder<'_>,
    history: &mut RunHistory,
) -> Result<()> {
    let (lambda, sigma) = match config.hyper {
        HyperMode::Fixed { lambda, sigma, .. } => (lambda, sigma),
        HyperMode::Theory => unreachable!("rejected in validate_run"),
    };
    let horizon = blocks * periods;
    let gamma = config.gamma.unwrap_or(1.0 - 1.0 / horizon as f64);
    let mut data: Vec<LowEpisode> = Vec::new();
    let mut theta_prev = vec![0.0; scheme.q_dim(QKind::Composite)];
    for k in 1..=episodes {
        let warm = k <= config.warm_start_episodes;
        recorder.push(TraceEvent::StationaryFit { episodes: data.len() });
        let theta = stationary_rlsvi_fit(
            &data,
            scheme,
            QKind::Composite,
            &theta_prev,
            horizon,
            Some(periods),
            lambda,
            sigma,
            gamma,
            rng,
        )?;
        theta_prev = theta.clone();
        let steps = flat_episode(
            env,
            scheme,
            k,
            blocks,
            periods,
            warm,
            config.tie_break,
            rng,
            |_, _| Ok(theta.clone()),
            options,
            history,
        )?;
        data.push(LowEpisode { steps });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_bandit<R: Rng + ?Sized>(
    env: &mut dyn BlockEnv,
    scheme: &FeatureScheme,
    episodes: usize,
    blocks: usize,
    periods: usize,
    config: &AgentConfig,
    rng: &mut R,
    options: &RunnerOptions,
    recorder: &mut Recorder<'_>,
    history: &mut RunHistory,
) -> Result<()> {
    let (lambda_ts, sigma_ts) = match config.hyper {
        HyperMode::Fixed { lambda_ts, sigma_ts, .. } => (lambda_ts, sigma_ts),
        HyperMode::Theory => unreachable!("rejected in validate_run"),
    };
    let dim = scheme.q_dim(QKind::Composite);
    let mut rows: Vec<(FeatureVector, f64)> = Vec::new();
    for k in 1..=episodes {
        let warm = k <= config.warm_start_episodes;
        env.begin_episode();
        for w in 1..=blocks {
            let high = env.begin_block();
            let mut a_high = 0usize;
            let mut steps = Vec::with_capacity(periods);
            let mut block_reward = 0.0;
            let mut block_betas: Vec<Vec<f64>> = Vec::with_capacity(periods);
            for h in 0..periods {
                let low = env.low_state();
                // Refit before every single action.
                recorder.push(TraceEvent::BanditFit { rows: rows.len() });
                let beta = ts_fit_rows(&rows, dim, lambda_ts, sigma_ts, rng)?;
                let a_low = if h == 0 {
                    let (ah, al) = if warm {
                        (rng.random_bool(0.5) as usize, rng.random_bool(0.5) as usize)
                    } else {
                        select_joint_action(&beta, scheme, &high, &low, config.tie_break, rng)?
                    };
                    a_high = ah;
                    env.set_high_action(ah);
                    al
                } else if warm {
                    rng.random_bool(0.5) as usize
                } else {
                    select_action(
                        &beta,
                        scheme,
                        QKind::Composite,
                        &high,
                        a_high,
                        &low,
                        config.tie_break,
                        rng,
                    )?
                };
                let reward = env.apply_low(a_low);
                block_reward += reward;
                rows.push((
                    scheme.q_features(QKind::Composite, &high, a_high, &low, a_low),
                    reward,
                ));
                steps.push(StepRecord { low, a_low, reward });
                if options.record_policies {
                    block_betas.push(beta);
                }
            }
            env.end_block();

            let policy = options.record_policies.then(|| {
                if warm {
                    BlockPolicy::Uniform
                } else {
                    BlockPolicy::Greedy {
                        a_high,
                        low_actions: block_betas
                            .iter()
                            .map(|beta| {
                                greedy_low_table(beta, scheme, QKind::Composite, high.idx(), a_high)
                            })
                            .collect(),
                    }
                }
            });
            history.records.push(BlockRecord {
                episode: k,
                block: w,
                high,
                a_high,
                steps,
                block_reward,
                policy,
                r_tilde_at_append: None,
                v_star: None,
                v_policy: None,
            });
        }
    }
    Ok(())
}
