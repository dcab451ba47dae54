//! Synthetic dyadic mobile-health test bed: per-dyad AR(1)-residual linear
//! dynamics for daily heart rate, sleep and square-root step count, weekly
//! mood for both members of the dyad, and burden-mediated treatment effects
//! on the step count.
//!
//! The simulation runs in raw units and truncates there; agents observe
//! standardized values, and the daily reward is the standardized next-day
//! square-root step count of the target person.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::agents::AgentConfig;
use crate::env::BlockEnv;
use crate::error::{Error, Result};
use crate::features::{FeatureScheme, State};
use crate::history::{Algorithm, RunHistory};
use crate::seeding::derive_rng;

/// Burden discount factor: an effective decision horizon of seven days.
pub const BURDEN_GAMMA: f64 = 1.0 - 1.0 / 7.0;

/// Truncation ranges in raw units.
pub const HEART_RANGE: (f64, f64) = (55.0, 120.0);
pub const SLEEP_RANGE: (f64, f64) = (0.0, 43_200.0);
pub const SQRTSTEP_RANGE: (f64, f64) = (0.0, 200.0);
pub const MOOD_RANGE: (f64, f64) = (0.0, 10.0);

/// Coefficient layout of the daily models:
/// (intercept, heart, sleep, sqrtstep, own mood, partner mood).
pub const DAILY_COEFS: usize = 6;
/// Coefficient layout of the weekly mood models:
/// (intercept, target mood, partner mood).
pub const MOOD_COEFS: usize = 3;

/// Index of the own-lag coefficient of sqrtstep in `beta_sqrtstep`.
const SS_OWN: usize = 3;
/// Index of the own-lag coefficient in `theta_mood_target`.
const MOOD_OWN: usize = 1;

/// Burden level after receiving k consecutive messages over the most recent
/// k days: the geometric partial sum (1-γ) Σ_{i=1..k} γ^(k-i) = 1 - γ^k.
pub fn b_threshold(k: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::invalid("burden threshold index must be >= 1"));
    }
    Ok(1.0 - BURDEN_GAMMA.powi(k as i32))
}

/// Exponentially weighted sum of this week's interventions through day h:
/// (1-γ) Σ_{s=1..h} A_s γ^(h-s).
pub fn burden(week_actions: &[u8], gamma: f64) -> f64 {
    let h = week_actions.len();
    week_actions
        .iter()
        .enumerate()
        .map(|(i, &a)| (1.0 - gamma) * a as f64 * gamma.powi((h - 1 - i) as i32))
        .sum()
}

/// Effective daily treatment effect given this week's burden trajectory
/// (including today): halved once today's burden reaches b1, zero for the
/// rest of the week once any burden has exceeded b2.
pub fn effective_low_effect(model: &DyadModel, week_burdens: &[f64], b1: f64, b2: f64) -> f64 {
    let current = week_burdens.last().copied().unwrap_or(0.0);
    if week_burdens.iter().any(|&b| b > b2) {
        return 0.0;
    }
    let shrink = if current >= b1 { model.tau1 } else { 0.0 };
    model.tau0 - shrink
}

/// Strength of the high-level action's carryover onto both members' weekly
/// mood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoodEffect {
    None,
    Weak,
    Strong,
    Extreme,
}

impl MoodEffect {
    /// Multiplier applied to the model's strong-effect mood lift.
    pub fn multiplier(&self) -> f64 {
        match self {
            MoodEffect::None => 0.0,
            MoodEffect::Weak => 0.5,
            MoodEffect::Strong => 1.0,
            MoodEffect::Extreme => 2.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MoodEffect::None => "none",
            MoodEffect::Weak => "weak",
            MoodEffect::Strong => "strong",
            MoodEffect::Extreme => "extreme",
        }
    }
}

impl std::fmt::Display for MoodEffect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MoodEffect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MoodEffect::None),
            "weak" => Ok(MoodEffect::Weak),
            "strong" => Ok(MoodEffect::Strong),
            "extreme" => Ok(MoodEffect::Extreme),
            other => Err(Error::config(format!("unknown mood effect '{other}'"))),
        }
    }
}

/// Burden and disengagement thresholds plus the mood-effect variant.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EffectConfig {
    /// b1 = b(b1_k): burden level that halves the treatment effect.
    pub b1_k: u32,
    /// b2 = b(b2_k): burden level beyond which the dyad disengages for the
    /// rest of the week.
    pub b2_k: u32,
    pub mood_effect: MoodEffect,
}

impl EffectConfig {
    pub fn new(b1_k: u32, b2_k: u32, mood_effect: MoodEffect) -> Result<Self> {
        let cfg = EffectConfig { b1_k, b2_k, mood_effect };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("b1_k", self.b1_k), ("b2_k", self.b2_k)] {
            if !(1..=8).contains(&k) {
                return Err(Error::invalid(format!("{name} must lie in 1..=8, got {k}")));
            }
        }
        Ok(())
    }

    pub fn b1(&self) -> f64 {
        b_threshold(self.b1_k).expect("validated")
    }

    pub fn b2(&self) -> f64 {
        b_threshold(self.b2_k).expect("validated")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn z(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.sd
    }

    pub fn raw(&self, z: f64) -> f64 {
        self.mean + self.sd * z
    }
}

/// AR(1) residual channel: carry' = rho * carry + N(0, sd²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub rho: f64,
    /// Innovation standard deviation.
    pub sd: f64,
}

impl ResidualModel {
    /// Standard deviation of the stationary residual distribution.
    pub fn stationary_sd(&self) -> f64 {
        self.sd / (1.0 - self.rho * self.rho).sqrt()
    }
}

/// Per-dyad linear transition coefficients, residual models and treatment
/// effect parameters. Coefficients act on standardized variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadModel {
    pub beta_heart: Vec<f64>,
    pub beta_sleep: Vec<f64>,
    pub beta_sqrtstep: Vec<f64>,
    pub theta_mood_target: Vec<f64>,
    pub theta_mood_partner: Vec<f64>,
    pub residual_heart: ResidualModel,
    pub residual_sleep: ResidualModel,
    pub residual_sqrtstep: ResidualModel,
    pub residual_mood_target: ResidualModel,
    pub residual_mood_partner: ResidualModel,
    /// Daily treatment effect without burden: one fifth of the own-lag
    /// sqrtstep coefficient.
    pub tau0: f64,
    /// Shrinkage once burden reaches b1: one tenth of the own-lag coefficient.
    pub tau1: f64,
    /// Per-day effect of the weekly action: one twenty-fifth of the own-lag
    /// coefficient.
    pub tau_high: f64,
    /// Strong-effect mood lift of the weekly action: one twenty-fifth of the
    /// target's own-lag mood coefficient. [`MoodEffect`] scales it at run
    /// time to the none/weak/strong/extreme settings.
    pub tau_mood: f64,
    pub stand_heart: Standardization,
    pub stand_sleep: Standardization,
    pub stand_sqrtstep: Standardization,
    pub stand_mood: Standardization,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

impl DyadModel {
    pub fn check_invariants(&self) -> Result<()> {
        for (name, v, n) in [
            ("beta_heart", &self.beta_heart, DAILY_COEFS),
            ("beta_sleep", &self.beta_sleep, DAILY_COEFS),
            ("beta_sqrtstep", &self.beta_sqrtstep, DAILY_COEFS),
            ("theta_mood_target", &self.theta_mood_target, MOOD_COEFS),
            ("theta_mood_partner", &self.theta_mood_partner, MOOD_COEFS),
        ] {
            if v.len() != n {
                return Err(Error::invalid(format!("{name} must have {n} coefficients")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("{name} has a non-finite coefficient")));
            }
        }
        for (name, r) in [
            ("residual_heart", self.residual_heart),
            ("residual_sleep", self.residual_sleep),
            ("residual_sqrtstep", self.residual_sqrtstep),
            ("residual_mood_target", self.residual_mood_target),
            ("residual_mood_partner", self.residual_mood_partner),
        ] {
            if !(r.rho.is_finite() && r.rho.abs() < 1.0) {
                return Err(Error::invalid(format!("{name}: |rho| must be < 1")));
            }
            if !(r.sd.is_finite() && r.sd > 0.0) {
                return Err(Error::invalid(format!("{name}: innovation sd must be > 0")));
            }
        }
        for (name, s) in [
            ("stand_heart", self.stand_heart),
            ("stand_sleep", self.stand_sleep),
            ("stand_sqrtstep", self.stand_sqrtstep),
            ("stand_mood", self.stand_mood),
        ] {
            if !(s.sd.is_finite() && s.sd > 0.0 && s.mean.is_finite()) {
                return Err(Error::invalid(format!("{name}: sd must be > 0")));
            }
        }
        let ss = self.beta_sqrtstep[SS_OWN];
        if !close(self.tau0, ss / 5.0) {
            return Err(Error::invalid("tau0 must equal beta_sqrtstep[sqrtstep]/5"));
        }
        if !close(self.tau1, ss / 10.0) {
            return Err(Error::invalid("tau1 must equal beta_sqrtstep[sqrtstep]/10"));
        }
        if !close(self.tau_high, ss / 25.0) {
            return Err(Error::invalid("tau_high must equal beta_sqrtstep[sqrtstep]/25"));
        }
        let mm = self.theta_mood_target[MOOD_OWN];
        let legal = [0.0, mm / 50.0, mm / 25.0, 2.0 * mm / 25.0];
        if !legal.iter().any(|&v| close(self.tau_mood, v)) {
            return Err(Error::invalid(
                "tau_mood must be one of {0, theta/50, theta/25, 2*theta/25}",
            ));
        }
        Ok(())
    }
}

/// Ranges for the synthetic coefficient generator. Coefficients live in
/// standardized units.
#[derive(Clone, Debug)]
pub struct GeneratorConfig {
    pub daily_own_slope: (f64, f64),
    pub cross_slope: (f64, f64),
    pub mood_own_slope: (f64, f64),
    pub residual_rho: (f64, f64),
    /// Stationary residual standard deviation (standardized units).
    pub residual_sd: (f64, f64),
    pub max_retries: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            daily_own_slope: (0.2, 0.6),
            cross_slope: (-0.1, 0.1),
            mood_own_slope: (0.3, 0.7),
            residual_rho: (0.2, 0.5),
            residual_sd: (0.9, 1.1),
            max_retries: 100,
        }
    }
}

/// Population standardization constants: raw-unit means sit mid-range so the
/// zero-intercept standardized dynamics are centered.
fn population_stats() -> (Standardization, Standardization, Standardization, Standardization) {
    (
        Standardization { mean: 87.5, sd: 10.0 },
        Standardization { mean: 21_600.0, sd: 7_200.0 },
        Standardization { mean: 100.0, sd: 30.0 },
        Standardization { mean: 5.0, sd: 1.5 },
    )
}

/// Spectral radius of a small dense matrix by power iteration on A·Aᵀ-free
/// absolute iteration; adequate for stability screening.
fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut radius = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[i] += m[i][j] * v[j];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        radius = norm;
        for (slot, x) in v.iter_mut().zip(&next) {
            *slot = x / norm;
        }
    }
    radius
}

/// Draws `n` synthetic dyad models. Unstable draws (spectral radius >= 0.95)
/// are rejected and redrawn up to `max_retries` times each.
pub fn synth_dyad_models<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    cfg: &GeneratorConfig,
) -> Result<Vec<DyadModel>> {
    let (stand_heart, stand_sleep, stand_sqrtstep, stand_mood) = population_stats();
    let mut models = Vec::with_capacity(n);
    for dyad in 0..n {
        let mut attempts = 0;
        let model = loop {
            attempts += 1;
            if attempts > cfg.max_retries {
                return Err(Error::Numeric(format!(
                    "dyad {dyad}: no stable dynamics within {} draws",
                    cfg.max_retries
                )));
            }
            let u = |rng: &mut R, (lo, hi): (f64, f64)| rng.random_range(lo..=hi);
            // Daily coefficient vectors: intercept 0, own-lag slope on the
            // diagonal, small cross terms elsewhere.
            let mut beta = [[0.0f64; DAILY_COEFS]; 3];
            for (var, row) in beta.iter_mut().enumerate() {
                for slot in 1..DAILY_COEFS {
                    row[slot] = if slot == var + 1 {
                        u(rng, cfg.daily_own_slope)
                    } else {
                        u(rng, cfg.cross_slope)
                    };
                }
            }
            let mut theta_t = [0.0f64; MOOD_COEFS];
            let mut theta_p = [0.0f64; MOOD_COEFS];
            theta_t[1] = u(rng, cfg.mood_own_slope);
            theta_t[2] = u(rng, cfg.cross_slope);
            theta_p[1] = u(rng, cfg.cross_slope);
            theta_p[2] = u(rng, cfg.mood_own_slope);

            let residual = |rng: &mut R| {
                let rho = u(rng, cfg.residual_rho);
                let st_sd = u(rng, cfg.residual_sd);
                ResidualModel { rho, sd: st_sd * (1.0 - rho * rho).sqrt() }
            };
            let residuals = [residual(rng), residual(rng), residual(rng), residual(rng), residual(rng)];

            let daily_matrix: Vec<Vec<f64>> = (0..3)
                .map(|i| (0..3).map(|j| beta[i][j + 1]).collect())
                .collect();
            let mood_matrix = vec![
                vec![theta_t[1], theta_t[2]],
                vec![theta_p[1], theta_p[2]],
            ];
            if spectral_radius(&daily_matrix) >= 0.95 || spectral_radius(&mood_matrix) >= 0.95 {
                continue;
            }

            let ss = beta[2][SS_OWN];
            break DyadModel {
                beta_heart: beta[0].to_vec(),
                beta_sleep: beta[1].to_vec(),
                beta_sqrtstep: beta[2].to_vec(),
                theta_mood_target: theta_t.to_vec(),
                theta_mood_partner: theta_p.to_vec(),
                residual_heart: residuals[0],
                residual_sleep: residuals[1],
                residual_sqrtstep: residuals[2],
                residual_mood_target: residuals[3],
                residual_mood_partner: residuals[4],
                tau0: ss / 5.0,
                tau1: ss / 10.0,
                tau_high: ss / 25.0,
                tau_mood: theta_t[MOOD_OWN] / 25.0,
                stand_heart,
                stand_sleep,
                stand_sqrtstep,
                stand_mood,
            };
        };
        model.check_invariants()?;
        models.push(model);
    }
    Ok(models)
}

#[derive(Serialize, Deserialize)]
struct DyadModelFile {
    schema_version: u32,
    dyads: Vec<serde_json::Value>,
}

pub const DYAD_MODEL_SCHEMA_VERSION: u32 = 1;

/// Writes dyad models as versioned JSON.
pub fn write_dyad_models(path: &Path, models: &[DyadModel]) -> Result<()> {
    let doc = DyadModelFile {
        schema_version: DYAD_MODEL_SCHEMA_VERSION,
        dyads: models
            .iter()
            .map(|m| serde_json::to_value(m).expect("model serializes"))
            .collect(),
    };
    let text = serde_json::to_string_pretty(&doc).expect("document serializes");
    std::fs::write(path, text)?;
    Ok(())
}

/// Loads dyad models from the versioned JSON format, checking every record's
/// invariants. Errors name the offending record and field.
pub fn ingest_dyad_models(path: &Path) -> Result<Vec<DyadModel>> {
    let text = std::fs::read_to_string(path)?;
    let doc: DyadModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if doc.schema_version != DYAD_MODEL_SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported schema_version {} (expected {DYAD_MODEL_SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    let mut models = Vec::with_capacity(doc.dyads.len());
    for (i, value) in doc.dyads.into_iter().enumerate() {
        let model: DyadModel = serde_json::from_value(value)
            .map_err(|e| Error::Parse(format!("record {i}: {e}")))?;
        model
            .check_invariants()
            .map_err(|e| Error::Parse(format!("record {i}: {e}")))?;
        models.push(model);
    }
    Ok(models)
}

/// Full latent state of a simulated dyad.
#[derive(Clone, Debug)]
pub struct DyadState {
    pub week: usize,
    pub day: usize,
    pub heart: f64,
    pub sleep: f64,
    pub sqrtstep: f64,
    pub mood_target: f64,
    pub mood_partner: f64,
    pub carry_heart: f64,
    pub carry_sleep: f64,
    pub carry_sqrtstep: f64,
    pub carry_mood_target: f64,
    pub carry_mood_partner: f64,
    /// Low-level actions taken so far this week.
    pub week_actions: Vec<u8>,
    /// Burden after the most recent action this week.
    pub burden: f64,
    pub disengaged_this_week: bool,
}

impl DyadState {
    /// Whether every variable sits inside its truncation range.
    pub fn in_bounds(&self) -> bool {
        let ok = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        ok(self.heart, HEART_RANGE)
            && ok(self.sleep, SLEEP_RANGE)
            && ok(self.sqrtstep, SQRTSTEP_RANGE)
            && ok(self.mood_target, MOOD_RANGE)
            && ok(self.mood_partner, MOOD_RANGE)
    }
}

fn clamp(v: f64, (lo, hi): (f64, f64)) -> f64 {
    v.clamp(lo, hi)
}

/// Advances one day: linear predictors on standardized values, treatment
/// effects on sqrtstep only, AR(1) residuals, then truncation in raw units.
/// Burden and disengagement advance with the low action. Consumes exactly
/// three Gaussian draws.
pub fn daily_transition<R: Rng + ?Sized>(
    model: &DyadModel,
    effect: &EffectConfig,
    state: &DyadState,
    a_high: usize,
    a_low: usize,
    rng: &mut R,
) -> Result<DyadState> {
    model.check_invariants()?;
    let mut next = state.clone();
    next.week_actions.push(a_low as u8);
    next.burden = burden(&next.week_actions, BURDEN_GAMMA);
    if next.burden > effect.b2() {
        next.disengaged_this_week = true;
    }
    let tau_low = if next.disengaged_this_week {
        0.0
    } else if next.burden >= effect.b1() {
        model.tau0 - model.tau1
    } else {
        model.tau0
    };

    let z = [
        1.0,
        model.stand_heart.z(state.heart),
        model.stand_sleep.z(state.sleep),
        model.stand_sqrtstep.z(state.sqrtstep),
        model.stand_mood.z(state.mood_target),
        model.stand_mood.z(state.mood_partner),
    ];
    let dot = |coefs: &[f64]| -> f64 { coefs.iter().zip(&z).map(|(c, x)| c * x).sum() };

    let innovate = |carry: f64, r: &ResidualModel, rng: &mut R| -> f64 {
        let xi: f64 = StandardNormal.sample(rng);
        r.rho * carry + r.sd * xi
    };
    next.carry_heart = innovate(state.carry_heart, &model.residual_heart, rng);
    next.carry_sleep = innovate(state.carry_sleep, &model.residual_sleep, rng);
    next.carry_sqrtstep = innovate(state.carry_sqrtstep, &model.residual_sqrtstep, rng);

    let z_heart = dot(&model.beta_heart) + next.carry_heart;
    let z_sleep = dot(&model.beta_sleep) + next.carry_sleep;
    let z_ss = dot(&model.beta_sqrtstep)
        + model.tau_high * a_high as f64
        + tau_low * a_low as f64
        + next.carry_sqrtstep;

    next.heart = clamp(model.stand_heart.raw(z_heart), HEART_RANGE);
    next.sleep = clamp(model.stand_sleep.raw(z_sleep), SLEEP_RANGE);
    next.sqrtstep = clamp(model.stand_sqrtstep.raw(z_ss), SQRTSTEP_RANGE);
    next.day += 1;
    Ok(next)
}

/// Advances both members' weekly mood under the chosen mood-effect variant.
/// Returns the new (target, partner) moods and residual carryovers. Consumes
/// exactly two Gaussian draws.
pub fn weekly_transition<R: Rng + ?Sized>(
    model: &DyadModel,
    moods: (f64, f64),
    carries: (f64, f64),
    a_high: usize,
    mood_effect: MoodEffect,
    rng: &mut R,
) -> ((f64, f64), (f64, f64)) {
    let z = [
        1.0,
        model.stand_mood.z(moods.0),
        model.stand_mood.z(moods.1),
    ];
    let lift = mood_effect.multiplier() * model.tau_mood * a_high as f64;
    let xi_t: f64 = StandardNormal.sample(rng);
    let xi_p: f64 = StandardNormal.sample(rng);
    let carry_t = model.residual_mood_target.rho * carries.0 + model.residual_mood_target.sd * xi_t;
    let carry_p = model.residual_mood_partner.rho * carries.1 + model.residual_mood_partner.sd * xi_p;
    let z_t: f64 = model.theta_mood_target.iter().zip(&z).map(|(c, x)| c * x).sum::<f64>() + lift + carry_t;
    let z_p: f64 = model.theta_mood_partner.iter().zip(&z).map(|(c, x)| c * x).sum::<f64>() + lift + carry_p;
    (
        (
            clamp(model.stand_mood.raw(z_t), MOOD_RANGE),
            clamp(model.stand_mood.raw(z_p), MOOD_RANGE),
        ),
        (carry_t, carry_p),
    )
}

#[derive(Clone, Debug)]
pub struct TestbedConfig {
    pub weeks: usize,
    pub days_per_week: usize,
    pub effect: EffectConfig,
}

/// One trial's environment: each episode draws a dyad (with replacement) and
/// simulates its trajectory.
pub struct TestbedEnv {
    models: Vec<DyadModel>,
    cfg: TestbedConfig,
    rng: ChaCha12Rng,
    model_idx: usize,
    state: DyadState,
    a_high: Option<usize>,
}

impl TestbedEnv {
    pub fn new(models: Vec<DyadModel>, cfg: TestbedConfig, seed: u64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::invalid("testbed needs at least one dyad model"));
        }
        cfg.effect.validate()?;
        if cfg.weeks == 0 || cfg.days_per_week == 0 {
            return Err(Error::invalid("weeks and days must be positive"));
        }
        for (i, m) in models.iter().enumerate() {
            m.check_invariants()
                .map_err(|e| Error::invalid(format!("model {i}: {e}")))?;
        }
        Ok(TestbedEnv {
            models,
            cfg,
            rng: derive_rng(seed, 0),
            model_idx: 0,
            state: DyadState {
                week: 0,
                day: 0,
                heart: HEART_RANGE.0,
                sleep: SLEEP_RANGE.0,
                sqrtstep: SQRTSTEP_RANGE.0,
                mood_target: MOOD_RANGE.0,
                mood_partner: MOOD_RANGE.0,
                carry_heart: 0.0,
                carry_sleep: 0.0,
                carry_sqrtstep: 0.0,
                carry_mood_target: 0.0,
                carry_mood_partner: 0.0,
                week_actions: Vec::new(),
                burden: 0.0,
                disengaged_this_week: false,
            },
            a_high: None,
        })
    }

    pub fn model(&self) -> &DyadModel {
        &self.models[self.model_idx]
    }

    pub fn state(&self) -> &DyadState {
        &self.state
    }

    pub fn current_model_index(&self) -> usize {
        self.model_idx
    }
}

impl BlockEnv for TestbedEnv {
    fn scheme(&self) -> FeatureScheme {
        FeatureScheme::Linear {
            high_dim: 2,
            low_dim: 3,
            high_actions: 2,
            low_actions: 2,
        }
    }

    fn blocks_per_episode(&self) -> usize {
        self.cfg.weeks
    }

    fn periods_per_block(&self) -> usize {
        self.cfg.days_per_week
    }

    fn begin_episode(&mut self) {
        self.model_idx = self.rng.random_range(0..self.models.len());
        let model = self.models[self.model_idx].clone();
        let mut draw = |sd: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            z * sd
        };
        // Initial daily states and the pre-study mood measurement, drawn in
        // standardized units around the population means.
        let heart = clamp(model.stand_heart.raw(draw(1.0)), HEART_RANGE);
        let sleep = clamp(model.stand_sleep.raw(draw(1.0)), SLEEP_RANGE);
        let sqrtstep = clamp(model.stand_sqrtstep.raw(draw(1.0)), SQRTSTEP_RANGE);
        let mood_target = clamp(model.stand_mood.raw(draw(1.0)), MOOD_RANGE);
        let mood_partner = clamp(model.stand_mood.raw(draw(1.0)), MOOD_RANGE);
        // Residual carryovers start at their stationary distribution.
        let carry_heart = draw(model.residual_heart.stationary_sd());
        let carry_sleep = draw(model.residual_sleep.stationary_sd());
        let carry_sqrtstep = draw(model.residual_sqrtstep.stationary_sd());
        let carry_mood_target = draw(model.residual_mood_target.stationary_sd());
        let carry_mood_partner = draw(model.residual_mood_partner.stationary_sd());
        self.state = DyadState {
            week: 0,
            day: 0,
            heart,
            sleep,
            sqrtstep,
            mood_target,
            mood_partner,
            carry_heart,
            carry_sleep,
            carry_sqrtstep,
            carry_mood_target,
            carry_mood_partner,
            week_actions: Vec::new(),
            burden: 0.0,
            disengaged_this_week: false,
        };
        self.a_high = None;
    }

    fn begin_block(&mut self) -> State {
        self.state.week += 1;
        self.state.week_actions.clear();
        self.state.burden = 0.0;
        self.state.disengaged_this_week = false;
        self.a_high = None;
        let model = self.model();
        State::Vec(vec![
            model.stand_mood.z(self.state.mood_target),
            model.stand_mood.z(self.state.mood_partner),
        ])
    }

    fn set_high_action(&mut self, a_high: usize) {
        assert!(a_high < 2, "weekly action must be 0 or 1");
        assert!(self.a_high.is_none(), "high action already set this block");
        self.a_high = Some(a_high);
    }

    fn low_state(&self) -> State {
        let model = self.model();
        State::Vec(vec![
            model.stand_heart.z(self.state.heart),
            model.stand_sleep.z(self.state.sleep),
            model.stand_sqrtstep.z(self.state.sqrtstep),
        ])
    }

    fn apply_low(&mut self, a_low: usize) -> f64 {
        let a_high = self.a_high.expect("high action must be set before stepping");
        let model = self.models[self.model_idx].clone();
        let next = daily_transition(
            &model,
            &self.cfg.effect,
            &self.state,
            a_high,
            a_low,
            &mut self.rng,
        )
        .expect("model invariants hold");
        self.state = next;
        model.stand_sqrtstep.z(self.state.sqrtstep)
    }

    fn end_block(&mut self) {
        let a_high = self.a_high.take().expect("high action must be set");
        let model = self.models[self.model_idx].clone();
        let (moods, carries) = weekly_transition(
            &model,
            (self.state.mood_target, self.state.mood_partner),
            (self.state.carry_mood_target, self.state.carry_mood_partner),
            a_high,
            self.cfg.effect.mood_effect,
            &mut self.rng,
        );
        self.state.mood_target = moods.0;
        self.state.mood_partner = moods.1;
        self.state.carry_mood_target = carries.0;
        self.state.carry_mood_partner = carries.1;
    }
}

/// Result of simulating one trial of sequentially arriving dyads.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub per_dyad_totals: Vec<f64>,
    pub grand_total: f64,
    pub history: RunHistory,
}

/// Simulates a trial: `n_dyads` dyads sampled with replacement arrive
/// sequentially, each one episode of `weeks` x `days` for the learning
/// algorithm. The daily reward is the target person's standardized next-day
/// sqrtstep.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    models: &[DyadModel],
    algo: Algorithm,
    n_dyads: usize,
    weeks: usize,
    days: usize,
    effect: EffectConfig,
    agent: &AgentConfig,
    seed: u64,
) -> Result<TrialResult> {
    if models.is_empty() {
        return Err(Error::invalid("run_trial needs a nonempty model list"));
    }
    let cfg = TestbedConfig { weeks, days_per_week: days, effect };
    let mut env = TestbedEnv::new(models.to_vec(), cfg, seed)?;
    let mut agent_rng = derive_rng(seed, 1);
    let history = crate::agents::run_algorithm(
        algo,
        &mut env,
        n_dyads,
        weeks,
        days,
        agent,
        &mut agent_rng,
        crate::agents::RunnerOptions::default(),
        None,
    )?;
    let per_dyad_totals = history.episode_totals();
    let grand_total = per_dyad_totals.iter().sum();
    Ok(TrialResult {
        per_dyad_totals,
        grand_total,
        history,
    })
}
