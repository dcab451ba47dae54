//! Toy maze environments: a weather context per block, an easy/hard maze
//! choice as the high-level action, grid navigation with rightward drift as
//! the low level, and a tiredness-mediated delayed effect in variants 3-5.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::env::BlockEnv;
use crate::error::{Error, Result};
use crate::features::{FeatureScheme, State};
use crate::seeding::derive_rng;
use crate::stats::chi_square_p;

pub const GRID_COLS: usize = 8;
pub const GRID_ROWS: usize = 4;
/// Number of grid cells, i.e. the low-level state cardinality.
pub const N_CELLS: usize = GRID_COLS * GRID_ROWS;

pub const ACTION_UP: usize = 0;
pub const ACTION_DOWN: usize = 1;
pub const MAZE_EASY: usize = 0;
pub const MAZE_HARD: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }

    /// Index into the low-level state set.
    pub fn idx(&self) -> usize {
        self.y * GRID_COLS + self.x
    }

    pub fn from_idx(idx: usize) -> Self {
        Pos {
            x: idx % GRID_COLS,
            y: idx / GRID_COLS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weather {
    Good,
    Bad,
}

impl Weather {
    pub fn idx(&self) -> usize {
        match self {
            Weather::Good => 0,
            Weather::Bad => 1,
        }
    }

    pub fn from_idx(i: usize) -> Self {
        if i == 0 {
            Weather::Good
        } else {
            Weather::Bad
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Dense,
    Sparse,
}

/// The five toy environment variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyVariant {
    Toy1,
    Toy2,
    Toy3,
    Toy4,
    Toy5,
}

impl ToyVariant {
    pub fn reward_mode(&self) -> RewardMode {
        match self {
            ToyVariant::Toy1 => RewardMode::Dense,
            _ => RewardMode::Sparse,
        }
    }

    /// Delayed-effect strength multiplying the tiredness penalty.
    pub fn tau_delayed(&self) -> f64 {
        match self {
            ToyVariant::Toy1 | ToyVariant::Toy2 => 0.0,
            ToyVariant::Toy3 => 1.0 / 3.0,
            ToyVariant::Toy4 => 2.0 / 3.0,
            ToyVariant::Toy5 => 1.0,
        }
    }

    pub fn has_delayed_effect(&self) -> bool {
        self.tau_delayed() > 0.0
    }

    pub fn name(&self) -> &'static str {
        match self {
            ToyVariant::Toy1 => "toy1",
            ToyVariant::Toy2 => "toy2",
            ToyVariant::Toy3 => "toy3",
            ToyVariant::Toy4 => "toy4",
            ToyVariant::Toy5 => "toy5",
        }
    }
}

impl std::fmt::Display for ToyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Maze geometry plus its per-cell score map and reward multiplier.
#[derive(Clone, Debug)]
pub struct MazeLayout {
    obstacles: [bool; N_CELLS],
    pub start: Pos,
    pub goal: Pos,
    scores: [i32; N_CELLS],
    pub reward_multiplier: f64,
}

/// Column score profiles. Scores depend on the column only, so the rightward
/// drift guarantees they never decrease along a trajectory. The one exception
/// is the top level, which sits on the goal cell alone. Ending a block at the
/// goal therefore requires a well-timed climb, which is what makes the
/// optimal policy depend on the time period.
const DENSE_COL_SCORES: [i32; GRID_COLS] = [0, 1, 1, 2, 2, 3, 3, 3];
const DENSE_GOAL_SCORE: i32 = 4;
const SPARSE_COL_SCORES: [i32; GRID_COLS] = [0, 0, 0, 1, 1, 1, 1, 1];
const SPARSE_GOAL_SCORE: i32 = 2;

/// Obstacles of the hard maze. (4,3) and (3,2) wall off the dead-end at
/// (3,3); (5,1) blocks the bottom route mid-grid.
const HARD_OBSTACLES: [(usize, usize); 3] = [(3, 2), (4, 3), (5, 1)];

impl MazeLayout {
    fn with_obstacles(obstacles: &[(usize, usize)], mode: RewardMode, multiplier: f64) -> Self {
        let mut obs = [false; N_CELLS];
        for &(x, y) in obstacles {
            obs[Pos::new(x, y).idx()] = true;
        }
        let (cols, goal_score) = match mode {
            RewardMode::Dense => (DENSE_COL_SCORES, DENSE_GOAL_SCORE),
            RewardMode::Sparse => (SPARSE_COL_SCORES, SPARSE_GOAL_SCORE),
        };
        let goal = Pos::new(GRID_COLS - 1, GRID_ROWS - 1);
        let mut scores = [0i32; N_CELLS];
        for y in 0..GRID_ROWS {
            for x in 0..GRID_COLS {
                scores[Pos::new(x, y).idx()] = cols[x];
            }
        }
        scores[goal.idx()] = goal_score;
        MazeLayout {
            obstacles: obs,
            start: Pos::new(0, 0),
            goal,
            scores,
            reward_multiplier: multiplier,
        }
    }

    pub fn easy(mode: RewardMode) -> Self {
        Self::with_obstacles(&[], mode, 1.0)
    }

    pub fn hard(mode: RewardMode) -> Self {
        Self::with_obstacles(&HARD_OBSTACLES, mode, 1.2)
    }

    pub fn for_choice(choice: usize, mode: RewardMode) -> Self {
        if choice == MAZE_HARD {
            Self::hard(mode)
        } else {
            Self::easy(mode)
        }
    }

    pub fn in_bounds(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < GRID_COLS && (y as usize) < GRID_ROWS
    }

    pub fn is_obstacle(&self, p: Pos) -> bool {
        self.obstacles[p.idx()]
    }

    /// Free and in-bounds.
    fn passable(&self, x: isize, y: isize) -> bool {
        self.in_bounds(x, y) && !self.obstacles[Pos::new(x as usize, y as usize).idx()]
    }

    pub fn score(&self, p: Pos) -> i32 {
        self.scores[p.idx()]
    }

    /// Geometry as text, top row first: '.' free, '#' obstacle, 'S' start,
    /// 'G' goal.
    pub fn ascii(&self) -> String {
        let mut out = String::new();
        for y in (0..GRID_ROWS).rev() {
            for x in 0..GRID_COLS {
                let p = Pos::new(x, y);
                let c = if p == self.start {
                    'S'
                } else if p == self.goal {
                    'G'
                } else if self.is_obstacle(p) {
                    '#'
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    /// Score map as digits, top row first.
    pub fn score_ascii(&self) -> String {
        let mut out = String::new();
        for y in (0..GRID_ROWS).rev() {
            for x in 0..GRID_COLS {
                let s = self.score(Pos::new(x, y));
                out.push(char::from_digit(s as u32, 10).expect("scores are single digits"));
            }
            out.push('\n');
        }
        out
    }
}

/// Exponentially weighted count of past hard-maze choices:
/// sum over past blocks l of 0.5^(w-l) * a_high_l, where `past_high_actions`
/// holds the actions of blocks 1..w-1.
pub fn tiredness(past_high_actions: &[usize]) -> f64 {
    let n = past_high_actions.len();
    past_high_actions
        .iter()
        .enumerate()
        .map(|(i, &a)| 0.5f64.powi((n - i) as i32) * a as f64)
        .sum()
}

/// Probability of moving as intended, per variant and weather, clamped to
/// [0, 1].
pub fn move_prob(variant: ToyVariant, weather: Weather, tiredness_value: f64) -> f64 {
    let p = match (variant.has_delayed_effect(), weather) {
        (false, Weather::Good) => 0.9,
        (false, Weather::Bad) => 0.6,
        (true, Weather::Good) => 1.0 - 0.3 * variant.tau_delayed() * tiredness_value,
        (true, Weather::Bad) => 0.7 - 0.3 * variant.tau_delayed() * tiredness_value,
    };
    p.clamp(0.0, 1.0)
}

fn vertical_target(layout: &MazeLayout, pos: Pos, dy: isize) -> Pos {
    let (x, y) = (pos.x as isize, pos.y as isize);
    if dy != 0 && layout.passable(x, y + dy) {
        Pos::new(x as usize, (y + dy) as usize)
    } else {
        pos
    }
}

fn horizontal_target(layout: &MazeLayout, pos: Pos) -> Pos {
    let (x, y) = (pos.x as isize, pos.y as isize);
    if layout.passable(x + 1, y) {
        Pos::new(x as usize + 1, pos.y)
    } else {
        pos
    }
}

/// One stochastic movement step.
///
/// The vertical move lands in the intended direction with probability p,
/// stays with probability (1-p)/2 and goes the opposite way with probability
/// (1-p)/2; blocked vertical moves become stays. The agent then drifts one
/// cell right with probability p unless blocked. The goal is absorbing.
///
/// Always consumes exactly two uniform draws so different policies can be
/// coupled on the same noise stream.
pub fn maze_step<R: Rng + ?Sized>(
    layout: &MazeLayout,
    pos: Pos,
    low_action: usize,
    p: f64,
    rng: &mut R,
) -> Pos {
    let u_vert: f64 = rng.random();
    let u_right: f64 = rng.random();
    if pos == layout.goal {
        return pos;
    }
    let intended: isize = if low_action == ACTION_UP { 1 } else { -1 };
    let dy = if u_vert < p {
        intended
    } else if u_vert < p + (1.0 - p) / 2.0 {
        0
    } else {
        -intended
    };
    let after_vertical = vertical_target(layout, pos, dy);
    if u_right < p {
        horizontal_target(layout, after_vertical)
    } else {
        after_vertical
    }
}

/// Exact distribution of `maze_step` outcomes: the transition kernel used by
/// the dynamic-programming oracle.
pub fn maze_step_kernel(layout: &MazeLayout, pos: Pos, low_action: usize, p: f64) -> Vec<(Pos, f64)> {
    if pos == layout.goal {
        return vec![(pos, 1.0)];
    }
    let intended: isize = if low_action == ACTION_UP { 1 } else { -1 };
    let vertical_outcomes = [(intended, p), (0, (1.0 - p) / 2.0), (-intended, (1.0 - p) / 2.0)];
    let mut probs: Vec<(Pos, f64)> = Vec::with_capacity(6);
    let mut push = |target: Pos, prob: f64| {
        if prob <= 0.0 {
            return;
        }
        if let Some(entry) = probs.iter_mut().find(|(q, _)| *q == target) {
            entry.1 += prob;
        } else {
            probs.push((target, prob));
        }
    };
    for (dy, v_prob) in vertical_outcomes {
        if v_prob <= 0.0 {
            continue;
        }
        let mid = vertical_target(layout, pos, dy);
        let right = horizontal_target(layout, mid);
        if right == mid {
            push(mid, v_prob);
        } else {
            push(right, v_prob * p);
            push(mid, v_prob * (1.0 - p));
        }
    }
    probs
}

/// Reward of a movement: multiplier times the score difference.
pub fn maze_reward(layout: &MazeLayout, old: Pos, new: Pos) -> f64 {
    layout.reward_multiplier * (layout.score(new) - layout.score(old)) as f64
}

#[derive(Clone, Debug)]
pub struct MazeEnvConfig {
    pub variant: ToyVariant,
    /// Probability of bad weather for each block; 0 means always good.
    pub weather_param: f64,
    pub blocks_per_episode: usize,
    pub periods_per_block: usize,
}

impl MazeEnvConfig {
    pub fn new(variant: ToyVariant, blocks: usize, periods: usize) -> Self {
        MazeEnvConfig {
            variant,
            weather_param: 0.5,
            blocks_per_episode: blocks,
            periods_per_block: periods,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.weather_param) {
            return Err(Error::invalid("weather_param must be in [0, 1]"));
        }
        if self.blocks_per_episode == 0 || self.periods_per_block == 0 {
            return Err(Error::invalid("blocks and periods must be positive"));
        }
        Ok(())
    }
}

/// A single-run maze environment instance.
pub struct MazeEnv {
    cfg: MazeEnvConfig,
    layouts: [MazeLayout; 2],
    rng: ChaCha12Rng,
    weather: Weather,
    maze_choice: Option<usize>,
    pos: Pos,
    tired: f64,
    high_history: Vec<usize>,
    block: usize,
    period: usize,
}

impl MazeEnv {
    pub fn new(cfg: MazeEnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mode = cfg.variant.reward_mode();
        Ok(MazeEnv {
            layouts: [MazeLayout::easy(mode), MazeLayout::hard(mode)],
            rng: derive_rng(seed, 0),
            weather: Weather::Good,
            maze_choice: None,
            pos: Pos::new(0, 0),
            tired: 0.0,
            high_history: Vec::new(),
            block: 0,
            period: 0,
            cfg,
        })
    }

    pub fn layout(&self, choice: usize) -> &MazeLayout {
        &self.layouts[choice]
    }

    pub fn weather(&self) -> Weather {
        self.weather
    }

    pub fn maze_choice(&self) -> Option<usize> {
        self.maze_choice
    }

    pub fn position(&self) -> Pos {
        self.pos
    }

    pub fn block_index(&self) -> usize {
        self.block
    }

    pub fn period_index(&self) -> usize {
        self.period
    }

    pub fn current_tiredness(&self) -> f64 {
        self.tired
    }
}

impl BlockEnv for MazeEnv {
    fn scheme(&self) -> FeatureScheme {
        FeatureScheme::Tabular {
            high_states: 2,
            high_actions: 2,
            low_states: N_CELLS,
            low_actions: 2,
        }
    }

    fn blocks_per_episode(&self) -> usize {
        self.cfg.blocks_per_episode
    }

    fn periods_per_block(&self) -> usize {
        self.cfg.periods_per_block
    }

    fn begin_episode(&mut self) {
        self.high_history.clear();
        self.block = 0;
    }

    fn begin_block(&mut self) -> State {
        let u: f64 = self.rng.random();
        self.weather = if u < self.cfg.weather_param {
            Weather::Bad
        } else {
            Weather::Good
        };
        self.tired = tiredness(&self.high_history);
        let start = self.layouts[0].start;
        self.pos = start;
        self.maze_choice = None;
        self.block += 1;
        self.period = 0;
        State::Idx(self.weather.idx())
    }

    fn set_high_action(&mut self, a_high: usize) {
        assert!(a_high < 2, "maze choice must be 0 (easy) or 1 (hard)");
        assert!(self.maze_choice.is_none(), "high action already set this block");
        self.maze_choice = Some(a_high);
        self.high_history.push(a_high);
    }

    fn low_state(&self) -> State {
        State::Idx(self.pos.idx())
    }

    fn apply_low(&mut self, a_low: usize) -> f64 {
        let choice = self.maze_choice.expect("high action must be set before stepping");
        let layout = &self.layouts[choice];
        let p = move_prob(self.cfg.variant, self.weather, self.tired);
        let old = self.pos;
        let new = maze_step(layout, old, a_low, p, &mut self.rng);
        self.pos = new;
        self.period += 1;
        maze_reward(layout, old, new)
    }

    fn end_block(&mut self) {}
}

/// Outcome of [`validate_dyadic_transitions`].
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub variant: ToyVariant,
    pub rollouts: usize,
    /// Number of structural assertions evaluated.
    pub constraint_checks: usize,
    /// Violations of the block-structure transition constraints.
    pub constraint_violations: usize,
    /// Chi-square p-value for "next block's weather is independent of this
    /// block's actions and final low state".
    pub property1_p: Option<f64>,
    /// Chi-square p-value for "within-block movement frequencies are
    /// homogeneous across block indices".
    pub homogeneity_p: Option<f64>,
    /// Whether homogeneity is expected to hold for this variant.
    pub homogeneity_expected: bool,
}

impl ValidationReport {
    pub fn structural_ok(&self) -> bool {
        self.constraint_violations == 0
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "environment: {}", self.variant)?;
        writeln!(f, "rollouts: {}", self.rollouts)?;
        writeln!(
            f,
            "structural constraints: {} checks, {} violations",
            self.constraint_checks, self.constraint_violations
        )?;
        match self.property1_p {
            Some(p) => writeln!(f, "exit-state independence p-value: {p:.6}")?,
            None => writeln!(f, "exit-state independence: not evaluated")?,
        }
        match self.homogeneity_p {
            Some(p) => writeln!(
                f,
                "block homogeneity p-value: {p:.6} (expected homogeneous: {})",
                self.homogeneity_expected
            )?,
            None => writeln!(f, "block homogeneity: not evaluated")?,
        }
        Ok(())
    }
}

/// Rolls out the environment under random actions and checks the dyadic
/// transition constraints plus the two distributional block properties.
pub fn validate_dyadic_transitions(
    cfg: &MazeEnvConfig,
    n_rollouts: usize,
    seed: u64,
) -> Result<ValidationReport> {
    cfg.validate()?;
    let mut env = MazeEnv::new(cfg.clone(), seed)?;
    let mut action_rng = derive_rng(seed, 1);

    let w = cfg.blocks_per_episode;
    let h = cfg.periods_per_block;
    let mut checks = 0usize;
    let mut violations = 0usize;
    // Rows: (a_high, last a_low, reached goal); columns: next block's weather.
    let mut exit_table = vec![vec![0u64; 2]; 8];
    // Rows: block index; columns: (vertical matched intended, did not).
    let mut move_table = vec![vec![0u64; 2]; w];

    let check = |ok: bool, checks: &mut usize, violations: &mut usize| {
        *checks += 1;
        if !ok {
            *violations += 1;
        }
    };

    for _ in 0..n_rollouts {
        env.begin_episode();
        let mut prev_block_stats: Option<(usize, usize, bool)> = None;
        for block in 1..=w {
            env.begin_block();
            let weather_at_start = env.weather();
            check(env.block_index() == block, &mut checks, &mut violations);
            check(env.period_index() == 0, &mut checks, &mut violations);
            check(env.maze_choice().is_none(), &mut checks, &mut violations);
            check(env.position() == env.layout(0).start, &mut checks, &mut violations);

            // Exit-state independence: bucket the previous block's behavior
            // against this block's freshly drawn weather.
            if let Some((a_high, a_low, reached)) = prev_block_stats.take() {
                let row = a_high * 4 + a_low * 2 + reached as usize;
                exit_table[row][weather_at_start.idx()] += 1;
            }

            let a_high = action_rng.random_bool(0.5) as usize;
            env.set_high_action(a_high);
            let mut last_a_low = 0usize;
            for _ in 1..=h {
                // Weather and maze choice must stay frozen within the block.
                check(env.weather() == weather_at_start, &mut checks, &mut violations);
                check(env.maze_choice() == Some(a_high), &mut checks, &mut violations);
                let before = env.position();
                let at_goal = before == env.layout(a_high).goal;
                let a_low = action_rng.random_bool(0.5) as usize;
                last_a_low = a_low;
                env.apply_low(a_low);
                let after = env.position();
                if !at_goal {
                    let intended: isize = if a_low == ACTION_UP { 1 } else { -1 };
                    let matched = (after.y as isize - before.y as isize) == intended;
                    move_table[block - 1][if matched { 0 } else { 1 }] += 1;
                }
            }
            env.end_block();
            let reached_goal = env.position() == env.layout(a_high).goal;
            prev_block_stats = Some((a_high, last_a_low, reached_goal));
        }
    }

    let (property1_p, homogeneity_p) = if n_rollouts == 0 {
        (None, None)
    } else {
        (chi_square_p(&exit_table), chi_square_p(&move_table))
    };

    Ok(ValidationReport {
        variant: cfg.variant,
        rollouts: n_rollouts,
        constraint_checks: checks,
        constraint_violations: violations,
        property1_p,
        homogeneity_p,
        homogeneity_expected: !cfg.variant.has_delayed_effect(),
    })
}
