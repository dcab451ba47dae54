use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use dyadic_rl::env::maze::{validate_dyadic_transitions, MazeEnvConfig};
use dyadic_rl::env::testbed::MoodEffect;
use dyadic_rl::error::{Error, Result};
use dyadic_rl::eval::experiment::{
    run_experiment, run_sweep, EnvId, ExperimentConfig, HyperId, SweepConfig,
};
use dyadic_rl::history::Algorithm;

#[derive(Parser)]
#[command(
    name = "dyadic-rl",
    about = "Hierarchical Bayesian RL simulation harness: toy mazes and a dyadic mobile-health test bed",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated simulations of one algorithm on one environment and
    /// write per-block results plus aggregated curves as CSV.
    Simulate(SimulateArgs),
    /// Sweep burden/disengagement thresholds on the test bed and write the
    /// baseline-minus-dyadic reward differences as CSV.
    SweepTestbed(SweepArgs),
    /// Roll out a toy environment under random actions and check its block
    /// transition structure.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Environment: toy1|toy2|toy3|toy4|toy5|testbed.
    #[arg(long)]
    env: Option<String>,
    /// Algorithm: dyadic|full|stationary|bandit.
    #[arg(long)]
    algo: Option<String>,
    /// Episodes per repetition (dyads, for the test bed).
    #[arg(long)]
    episodes: Option<usize>,
    /// Blocks per episode (weeks, for the test bed).
    #[arg(long)]
    blocks: Option<usize>,
    /// Periods per block (days, for the test bed).
    #[arg(long)]
    periods: Option<usize>,
    /// Independent repetitions.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hyperparameter mode: fixed1|theory.
    #[arg(long)]
    hyper: Option<String>,
    /// Output path prefix; writes <out>_blocks.csv and <out>_curves.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Episodes with purely random actions.
    #[arg(long)]
    warm_start: Option<usize>,
    /// Probability of bad weather per block (toy environments).
    #[arg(long)]
    weather_param: Option<f64>,
    /// Burden threshold index b1 = b(k) (test bed).
    #[arg(long)]
    b1k: Option<u32>,
    /// Disengagement threshold index b2 = b(k) (test bed).
    #[arg(long)]
    b2k: Option<u32>,
    /// Mood carryover variant: none|weak|strong|extreme (test bed).
    #[arg(long)]
    mood_effect: Option<String>,
    /// Dyad-model JSON file to ingest instead of synthesizing (test bed).
    #[arg(long)]
    models: Option<PathBuf>,
    /// Number of synthetic dyad models when none are ingested (test bed).
    #[arg(long)]
    n_models: Option<usize>,
    /// JSON file with the full experiment configuration; other flags are
    /// ignored when present.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated burden threshold indices.
    #[arg(long, value_delimiter = ',')]
    b1: Vec<u32>,
    /// Comma-separated disengagement threshold indices.
    #[arg(long, value_delimiter = ',')]
    b2: Vec<u32>,
    /// Mood carryover variant: none|weak|strong|extreme.
    #[arg(long, default_value = "none")]
    mood_effect: String,
    /// Trials per (cell, algorithm).
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path prefix; writes <out>_sweep.csv.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Dyads per trial.
    #[arg(long, default_value_t = 100)]
    dyads: usize,
    #[arg(long, default_value_t = 14)]
    weeks: usize,
    #[arg(long, default_value_t = 7)]
    days: usize,
    /// Dyad-model JSON file to ingest instead of synthesizing.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Number of synthetic dyad models when none are ingested.
    #[arg(long, default_value_t = 49)]
    n_models: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Environment: toy1|toy2|toy3|toy4|toy5.
    #[arg(long)]
    env: String,
    #[arg(long)]
    rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 15)]
    blocks: usize,
    #[arg(long, default_value_t = 7)]
    periods: usize,
}

fn simulate_config(args: &SimulateArgs) -> Result<ExperimentConfig> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        return Ok(cfg);
    }
    let env: EnvId = args
        .env
        .as_deref()
        .ok_or_else(|| Error::config("--env is required (or pass --config)"))?
        .parse()?;
    let algo: Algorithm = args
        .algo
        .as_deref()
        .ok_or_else(|| Error::config("--algo is required (or pass --config)"))?
        .parse()?;
    let hyper: HyperId = args.hyper.as_deref().unwrap_or("fixed1").parse()?;
    let mood_effect: MoodEffect = args.mood_effect.as_deref().unwrap_or("none").parse()?;
    Ok(ExperimentConfig {
        env,
        algo,
        episodes: args.episodes.unwrap_or(100),
        blocks: args.blocks.unwrap_or(if env == EnvId::Testbed { 14 } else { 15 }),
        periods: args.periods.unwrap_or(7),
        reps: args.reps.unwrap_or(1),
        seed: args.seed.unwrap_or(0),
        hyper,
        out: args.out.clone().unwrap_or_else(|| PathBuf::from("results")),
        warm_start_episodes: args.warm_start.unwrap_or(1),
        weather_param: args.weather_param.unwrap_or(0.5),
        b1_k: args.b1k.unwrap_or(1),
        b2_k: args.b2k.unwrap_or(2),
        mood_effect,
        n_models: args.n_models.unwrap_or(49),
        models: args.models.clone(),
    })
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Simulate(args) => {
            let cfg = simulate_config(&args)?;
            let out = run_experiment(&cfg)?;
            println!("wrote {}", out.blocks_path.display());
            println!("wrote {}", out.curves_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepTestbed(args) => {
            let cfg = SweepConfig {
                b1: args.b1,
                b2: args.b2,
                mood_effect: args.mood_effect.parse()?,
                trials: args.trials,
                seed: args.seed,
                out: args.out,
                n_dyads: args.dyads,
                weeks: args.weeks,
                days: args.days,
                n_models: args.n_models,
                models: args.models,
                warm_start_episodes: 1,
            };
            let path = run_sweep(&cfg)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(args) => {
            let env: EnvId = args.env.parse()?;
            let variant = env.toy_variant().ok_or_else(|| {
                Error::config("the transition validator applies to the toy environments only")
            })?;
            let cfg = MazeEnvConfig::new(variant, args.blocks, args.periods);
            let report = validate_dyadic_transitions(&cfg, args.rollouts, args.seed)?;
            print!("{report}");
            if report.structural_ok() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
