//! Experiment orchestration: repetition fan-out, regret attachment, CSV
//! outputs and the test-bed sweep.

use rayon::prelude::*;
use serde::Deserialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::agents::{run_algorithm, AgentConfig, HyperMode, RunnerOptions, TieBreak};
use crate::env::maze::{MazeEnv, MazeEnvConfig, ToyVariant};
use crate::env::testbed::{
    ingest_dyad_models, run_trial, synth_dyad_models, DyadModel, EffectConfig, GeneratorConfig,
    MoodEffect, TestbedConfig, TestbedEnv,
};
use crate::error::{Error, Result};
use crate::eval::oracle::MazeOracle;
use crate::eval::{aggregate, SeriesSummary};
use crate::history::{Algorithm, RunHistory};
use crate::seeding::derive_rng;

/// Which environment an experiment runs against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Toy1,
    Toy2,
    Toy3,
    Toy4,
    Toy5,
    Testbed,
}

impl EnvId {
    pub fn toy_variant(&self) -> Option<ToyVariant> {
        match self {
            EnvId::Toy1 => Some(ToyVariant::Toy1),
            EnvId::Toy2 => Some(ToyVariant::Toy2),
            EnvId::Toy3 => Some(ToyVariant::Toy3),
            EnvId::Toy4 => Some(ToyVariant::Toy4),
            EnvId::Toy5 => Some(ToyVariant::Toy5),
            EnvId::Testbed => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvId::Testbed => "testbed",
            other => other.toy_variant().unwrap().name(),
        }
    }
}

impl std::fmt::Display for EnvId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy1" => Ok(EnvId::Toy1),
            "toy2" => Ok(EnvId::Toy2),
            "toy3" => Ok(EnvId::Toy3),
            "toy4" => Ok(EnvId::Toy4),
            "toy5" => Ok(EnvId::Toy5),
            "testbed" => Ok(EnvId::Testbed),
            other => Err(Error::config(format!("unknown environment '{other}'"))),
        }
    }
}

/// CLI-facing hyperparameter mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperId {
    Fixed1,
    Theory,
}

impl std::str::FromStr for HyperId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed1" => Ok(HyperId::Fixed1),
            "theory" => Ok(HyperId::Theory),
            other => Err(Error::config(format!("unknown hyperparameter mode '{other}'"))),
        }
    }
}

impl HyperId {
    fn to_mode(self) -> HyperMode {
        match self {
            HyperId::Fixed1 => HyperMode::fixed_unit(),
            HyperId::Theory => HyperMode::Theory,
        }
    }
}

fn default_episodes() -> usize {
    100
}
fn default_blocks() -> usize {
    15
}
fn default_periods() -> usize {
    7
}
fn default_reps() -> usize {
    1
}
fn default_hyper() -> HyperId {
    HyperId::Fixed1
}
fn default_warm_start() -> usize {
    1
}
fn default_weather() -> f64 {
    0.5
}
fn default_b1k() -> u32 {
    1
}
fn default_b2k() -> u32 {
    2
}
fn default_mood() -> MoodEffect {
    MoodEffect::None
}
fn default_n_models() -> usize {
    49
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// Everything needed to reproduce one experiment. Loadable from JSON.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub algo: Algorithm,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hyper")]
    pub hyper: HyperId,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_warm_start")]
    pub warm_start_episodes: usize,
    /// Probability of bad weather per block (toy environments).
    #[serde(default = "default_weather")]
    pub weather_param: f64,
    /// Burden threshold index (test bed).
    #[serde(default = "default_b1k")]
    pub b1_k: u32,
    /// Disengagement threshold index (test bed).
    #[serde(default = "default_b2k")]
    pub b2_k: u32,
    #[serde(default = "default_mood")]
    pub mood_effect: MoodEffect,
    /// Number of synthetic dyad models when none are ingested (test bed).
    #[serde(default = "default_n_models")]
    pub n_models: usize,
    /// Optional dyad-model JSON to ingest instead of synthesizing (test bed).
    #[serde(default)]
    pub models: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.blocks == 0 || self.periods == 0 || self.reps == 0 {
            return Err(Error::config(
                "episodes, blocks, periods and reps must be positive",
            ));
        }
        if self.env == EnvId::Testbed {
            EffectConfig::new(self.b1_k, self.b2_k, self.mood_effect)?;
            if self.models.is_none() && self.n_models == 0 {
                return Err(Error::config("the test bed needs at least one dyad model"));
            }
        }
        if self.hyper == HyperId::Theory && self.algo != Algorithm::Dyadic {
            return Err(Error::config(
                "the theory hyperparameter schedule is defined for the dyadic algorithm only",
            ));
        }
        if self.hyper == HyperId::Theory && self.env == EnvId::Testbed {
            return Err(Error::config(
                "the theory hyperparameter schedule requires a tabular environment",
            ));
        }
        Ok(())
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            hyper: self.hyper.to_mode(),
            tie_break: TieBreak::UniformRandom,
            warm_start_episodes: self.warm_start_episodes,
            gamma: None,
        }
    }

    pub fn effect_config(&self) -> Result<EffectConfig> {
        EffectConfig::new(self.b1_k, self.b2_k, self.mood_effect)
    }
}

/// Reserved seed stream for synthesizing the dyad model population.
const MODEL_STREAM: u64 = u64::MAX - 7;

/// Loads or synthesizes the dyad model population for a test-bed experiment.
pub fn experiment_models(cfg: &ExperimentConfig) -> Result<Vec<DyadModel>> {
    match &cfg.models {
        Some(path) => ingest_dyad_models(path),
        None => synth_dyad_models(
            cfg.n_models,
            &mut derive_rng(cfg.seed, MODEL_STREAM),
            &GeneratorConfig::default(),
        ),
    }
}

/// One repetition's outcome, reduced to the series the harness aggregates.
#[derive(Clone, Debug)]
pub struct RepOutcome {
    /// Realized block reward per (episode, block), flattened in run order.
    pub block_rewards: Vec<f64>,
    /// Per-block regret gaps, present when the environment has an oracle.
    pub regret_gaps: Option<Vec<f64>>,
}

impl RepOutcome {
    pub fn cumulative_regret(&self) -> Option<Vec<f64>> {
        self.regret_gaps.as_ref().map(|gaps| {
            let mut total = 0.0;
            gaps.iter()
                .map(|g| {
                    total += g;
                    total
                })
                .collect()
        })
    }
}

fn run_one_rep(
    cfg: &ExperimentConfig,
    models: Option<&[DyadModel]>,
    oracle: Option<&MazeOracle>,
    rep: usize,
) -> Result<RepOutcome> {
    let env_seed_stream = 2 * rep as u64;
    let agent_stream = 2 * rep as u64 + 1;
    let agent = cfg.agent_config();
    let options = RunnerOptions {
        record_policies: oracle.is_some(),
    };
    let mut history: RunHistory = match cfg.env.toy_variant() {
        Some(variant) => {
            let mut env_cfg = MazeEnvConfig::new(variant, cfg.blocks, cfg.periods);
            env_cfg.weather_param = cfg.weather_param;
            // The maze env derives its own stream from this seed.
            let mut env = MazeEnv::new(env_cfg, cfg.seed.wrapping_add(env_seed_stream))?;
            let mut rng = derive_rng(cfg.seed, agent_stream);
            run_algorithm(
                cfg.algo,
                &mut env,
                cfg.episodes,
                cfg.blocks,
                cfg.periods,
                &agent,
                &mut rng,
                options,
                None,
            )?
        }
        None => {
            let effect = cfg.effect_config()?;
            let testbed_cfg = TestbedConfig {
                weeks: cfg.blocks,
                days_per_week: cfg.periods,
                effect,
            };
            let mut env = TestbedEnv::new(
                models.expect("test-bed models loaded").to_vec(),
                testbed_cfg,
                cfg.seed.wrapping_add(env_seed_stream),
            )?;
            let mut rng = derive_rng(cfg.seed, agent_stream);
            run_algorithm(
                cfg.algo,
                &mut env,
                cfg.episodes,
                cfg.blocks,
                cfg.periods,
                &agent,
                &mut rng,
                options,
                None,
            )?
        }
    };
    if let Some(oracle) = oracle {
        oracle.attach(&mut history)?;
    }
    let block_rewards = history.records.iter().map(|r| r.block_reward).collect();
    let regret_gaps = if oracle.is_some() {
        Some(
            history
                .records
                .iter()
                .map(|r| r.regret().expect("oracle attached"))
                .collect(),
        )
    } else {
        None
    };
    Ok(RepOutcome {
        block_rewards,
        regret_gaps,
    })
}

/// Runs every repetition of an experiment (in parallel) and returns the
/// per-repetition outcomes in repetition order.
pub fn run_reps(cfg: &ExperimentConfig) -> Result<Vec<RepOutcome>> {
    cfg.validate()?;
    let oracle = match cfg.env.toy_variant() {
        Some(variant) => {
            let mut env_cfg = MazeEnvConfig::new(variant, cfg.blocks, cfg.periods);
            env_cfg.weather_param = cfg.weather_param;
            MazeOracle::for_config(&env_cfg)?
        }
        None => None,
    };
    let models = if cfg.env == EnvId::Testbed {
        Some(experiment_models(cfg)?)
    } else {
        None
    };
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_one_rep(cfg, models.as_deref(), oracle.as_ref(), rep))
        .collect()
}

/// Serializes a float with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct ExperimentOutput {
    pub blocks_path: PathBuf,
    pub curves_path: PathBuf,
}

/// Runs an experiment and writes the per-block and aggregated-curve CSVs.
/// Byte-identical outputs for identical configurations.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let outcomes = run_reps(cfg)?;
    let blocks_path = with_suffix(&cfg.out, "_blocks.csv");
    let curves_path = with_suffix(&cfg.out, "_curves.csv");

    let mut blocks = open_writer(&blocks_path)?;
    writeln!(blocks, "rep,episode,block,algo,env,block_reward,regret")?;
    for (rep, outcome) in outcomes.iter().enumerate() {
        for (i, &reward) in outcome.block_rewards.iter().enumerate() {
            let episode = i / cfg.blocks + 1;
            let block = i % cfg.blocks + 1;
            let regret = match &outcome.regret_gaps {
                Some(gaps) => fmt_float(gaps[i]),
                None => String::new(),
            };
            writeln!(
                blocks,
                "{},{},{},{},{},{},{}",
                rep + 1,
                episode,
                block,
                cfg.algo,
                cfg.env,
                fmt_float(reward),
                regret
            )?;
        }
    }
    blocks.flush()?;

    let reward_summary = aggregate(
        &outcomes
            .iter()
            .map(|o| o.block_rewards.clone())
            .collect::<Vec<_>>(),
    )?;
    let regret_summary: Option<SeriesSummary> = if outcomes
        .iter()
        .all(|o| o.regret_gaps.is_some())
    {
        Some(aggregate(
            &outcomes
                .iter()
                .map(|o| o.cumulative_regret().expect("gaps present"))
                .collect::<Vec<_>>(),
        )?)
    } else {
        None
    };

    let mut curves = open_writer(&curves_path)?;
    writeln!(
        curves,
        "episode,block,algo,env,reps,mean_block_reward,se_block_reward,mean_cum_regret,se_cum_regret"
    )?;
    for i in 0..cfg.episodes * cfg.blocks {
        let (mr, sr) = match &regret_summary {
            Some(s) => (fmt_float(s.mean[i]), fmt_float(s.se[i])),
            None => (String::new(), String::new()),
        };
        writeln!(
            curves,
            "{},{},{},{},{},{},{},{},{}",
            i / cfg.blocks + 1,
            i % cfg.blocks + 1,
            cfg.algo,
            cfg.env,
            cfg.reps,
            fmt_float(reward_summary.mean[i]),
            fmt_float(reward_summary.se[i]),
            mr,
            sr
        )?;
    }
    curves.flush()?;

    Ok(ExperimentOutput {
        blocks_path,
        curves_path,
    })
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn open_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn default_sweep_dyads() -> usize {
    100
}
fn default_sweep_weeks() -> usize {
    14
}

/// Configuration of a test-bed threshold sweep.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub b1: Vec<u32>,
    pub b2: Vec<u32>,
    #[serde(default = "default_mood")]
    pub mood_effect: MoodEffect,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_sweep_dyads")]
    pub n_dyads: usize,
    #[serde(default = "default_sweep_weeks")]
    pub weeks: usize,
    #[serde(default = "default_periods")]
    pub days: usize,
    #[serde(default = "default_n_models")]
    pub n_models: usize,
    #[serde(default)]
    pub models: Option<PathBuf>,
    #[serde(default = "default_warm_start")]
    pub warm_start_episodes: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b1.is_empty() || self.b2.is_empty() {
            return Err(Error::config("sweep needs at least one b1 and one b2 value"));
        }
        for &k in self.b1.iter().chain(&self.b2) {
            if !(1..=8).contains(&k) {
                return Err(Error::config(format!("threshold index {k} outside 1..=8")));
            }
        }
        if self.trials == 0 || self.n_dyads == 0 || self.weeks == 0 || self.days == 0 {
            return Err(Error::config("trials, dyads, weeks and days must be positive"));
        }
        Ok(())
    }
}

/// Runs the sweep: for every (b1, b2) cell and every baseline algorithm,
/// the mean paired difference in total trial reward against the hierarchical
/// algorithm, with its standard error. Trials share seeds across algorithms
/// and cells (common random numbers).
pub fn run_sweep(cfg: &SweepConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let models = match &cfg.models {
        Some(path) => ingest_dyad_models(path)?,
        None => synth_dyad_models(
            cfg.n_models,
            &mut derive_rng(cfg.seed, MODEL_STREAM),
            &GeneratorConfig::default(),
        )?,
    };
    let agent = AgentConfig {
        warm_start_episodes: cfg.warm_start_episodes,
        ..AgentConfig::default()
    };
    let baselines = [Algorithm::Full, Algorithm::Bandit, Algorithm::Stationary];

    let mut cells = Vec::new();
    for &b1 in &cfg.b1 {
        for &b2 in &cfg.b2 {
            cells.push(EffectConfig::new(b1, b2, cfg.mood_effect)?);
        }
    }

    // All (cell, algorithm, trial) jobs, dyadic included as the reference.
    let algos: Vec<Algorithm> = std::iter::once(Algorithm::Dyadic)
        .chain(baselines)
        .collect();
    let mut jobs = Vec::new();
    for (ci, effect) in cells.iter().enumerate() {
        for (ai, &algo) in algos.iter().enumerate() {
            for trial in 0..cfg.trials {
                jobs.push((ci, ai, algo, *effect, trial));
            }
        }
    }
    type CellTotal = ((usize, usize, usize), f64);
    let totals: Result<Vec<CellTotal>> = jobs
        .into_par_iter()
        .map(|(ci, ai, algo, effect, trial)| {
            let seed = cfg.seed.wrapping_add(trial as u64).wrapping_mul(2).wrapping_add(1);
            let result = run_trial(
                &models,
                algo,
                cfg.n_dyads,
                cfg.weeks,
                cfg.days,
                effect,
                &agent,
                seed,
            )?;
            Ok(((ci, ai, trial), result.grand_total))
        })
        .collect();
    let totals = totals?;
    let mut table = vec![vec![vec![0.0f64; cfg.trials]; algos.len()]; cells.len()];
    for ((ci, ai, trial), total) in totals {
        table[ci][ai][trial] = total;
    }

    let out_path = with_suffix(&cfg.out, "_sweep.csv");
    let mut out = open_writer(&out_path)?;
    writeln!(
        out,
        "b1_k,b2_k,mood_effect,algo,mean_total_reward_diff_vs_dyadic,std_error,trials"
    )?;
    for (ci, effect) in cells.iter().enumerate() {
        let dyadic = &table[ci][0];
        for (ai, &algo) in algos.iter().enumerate().skip(1) {
            let diffs: Vec<f64> = table[ci][ai]
                .iter()
                .zip(dyadic)
                .map(|(b, d)| b - d)
                .collect();
            let (mean, se) = crate::stats::mean_se(&diffs)?;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                effect.b1_k,
                effect.b2_k,
                effect.mood_effect,
                algo,
                fmt_float(mean),
                fmt_float(se),
                cfg.trials
            )?;
        }
    }
    out.flush()?;
    Ok(out_path)
}
