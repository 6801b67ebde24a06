//! Seeded benchmark environments and task families.

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Sizes, TabularMdp};
use crate::reward::RewardFamily;
use crate::rng::RngStream;

/// Largest admissible ε for the hard task family.
pub const HARD_EPSILON_MAX: f64 = 0.125;

/// Transition rows drawn from a symmetric Dirichlet(1).
pub fn gen_random_dense(states: usize, actions: usize, horizon: usize, seed: u64) -> Result<TabularMdp> {
    let sizes = Sizes::new(states, actions, horizon)?;
    let mut rng = RngStream::new(seed, "gen:random-dense");
    TabularMdp::from_fn(sizes, |_, _, _, row| {
        for p in row.iter_mut() {
            let e: f64 = Exp1.sample(rng.inner());
            // Exp1 can return 0 with vanishing probability; keep the row normalisable
            *p = e.max(f64::MIN_POSITIVE);
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    })
}

/// Every row uniform: actions do not influence the next state.
pub fn gen_uniform_transition(states: usize, actions: usize, horizon: usize) -> Result<TabularMdp> {
    let sizes = Sizes::new(states, actions, horizon)?;
    TabularMdp::from_fn(sizes, |_, _, _, row| row.fill(1.0 / states as f64))
}

/// Two-action chain. Action 0 moves right and action 1 moves left, each
/// succeeding with probability `1 - slip` and otherwise staying put. Moves
/// off either end stay put.
pub fn gen_chain(states: usize, horizon: usize, slip: f64) -> Result<TabularMdp> {
    check_slip(slip)?;
    let sizes = Sizes::new(states, 2, horizon)?;
    TabularMdp::from_fn(sizes, |_, s, a, row| {
        let target = match a {
            0 => (s + 1).min(states - 1),
            _ => s.saturating_sub(1),
        };
        row[target] += 1.0 - slip;
        row[s] += slip;
    })
}

/// Grid of `width x height` cells, state `row * width + col`, start in the
/// top-left corner. Actions are up, down, left, right. With probability
/// `1 - slip` the intended move is made; otherwise a uniformly random
/// direction is taken. Moves into a wall leave the agent in place.
pub fn gen_gridworld(width: usize, height: usize, horizon: usize, slip: f64) -> Result<TabularMdp> {
    check_slip(slip)?;
    if width == 0 || height == 0 {
        return Err(Error::Parameter("grid dimensions must be positive".into()));
    }
    let sizes = Sizes::new(width * height, 4, horizon)?;
    let neighbour = |s: usize, dir: usize| -> usize {
        let (r, c) = (s / width, s % width);
        match dir {
            0 if r > 0 => s - width,
            1 if r + 1 < height => s + width,
            2 if c > 0 => s - 1,
            3 if c + 1 < width => s + 1,
            _ => s,
        }
    };
    TabularMdp::from_fn(sizes, |_, s, a, row| {
        row[neighbour(s, a)] += 1.0 - slip;
        for dir in 0..4 {
            row[neighbour(s, dir)] += slip / 4.0;
        }
    })
}

fn check_slip(slip: f64) -> Result<()> {
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::Parameter(format!("slip {slip} outside [0, 1)")));
    }
    Ok(())
}

/// Bernoulli task with means drawn uniformly from [0, 1] per (h, s, a).
pub fn random_bernoulli_task(sizes: Sizes, seed: u64) -> RewardFamily {
    let mut rng = RngStream::new(seed, "gen:bernoulli-task");
    let means = (0..sizes.cells()).map(|_| rng.uniform()).collect();
    RewardFamily::bernoulli(sizes, means).expect("uniform draws lie in [0, 1)")
}

/// Deterministic task with table entries drawn uniformly from [0, 1].
pub fn random_deterministic_task(sizes: Sizes, seed: u64) -> RewardFamily {
    let mut rng = RngStream::new(seed, "gen:deterministic-task");
    let means = (0..sizes.cells()).map(|_| rng.uniform()).collect();
    RewardFamily::deterministic(sizes, means).expect("uniform draws lie in [0, 1)")
}

/// Navigation task: reward 1 for every step spent in `goal`.
pub fn goal_task(sizes: Sizes, goal: usize) -> Result<RewardFamily> {
    crate::error::check_index("state", goal, sizes.states)?;
    let mut means = vec![0.0; sizes.cells()];
    for h in 0..sizes.horizon {
        for a in 0..sizes.actions {
            means[sizes.cell(h, goal, a)] = 1.0;
        }
    }
    RewardFamily::deterministic(sizes, means)
}

/// One instance of the hard multi-armed construction replicated over every
/// (h, s): arm 0 has mean (1+ε)/2, a hidden arm has mean 1/2+ε and all other
/// arms have mean 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstance {
    pub family: RewardFamily,
    /// Hidden best action per (h, s), (h, s)-major.
    pub hidden_arm: Vec<usize>,
}

pub fn gen_hard_task_family(
    states: usize,
    actions: usize,
    horizon: usize,
    epsilon: f64,
    seed: u64,
) -> Result<HardInstance> {
    let sizes = Sizes::new(states, actions, horizon)?;
    if actions < 3 {
        return Err(Error::Parameter(format!(
            "hard family needs at least 3 actions, got {actions}"
        )));
    }
    if !(epsilon > 0.0 && epsilon <= HARD_EPSILON_MAX) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside (0, 1/8]")));
    }
    let mut rng = RngStream::new(seed, "gen:hard-family");
    let mut means = vec![0.5; sizes.cells()];
    let mut hidden_arm = Vec::with_capacity(horizon * states);
    for h in 0..horizon {
        for s in 0..states {
            let arm = 1 + rng.below(actions - 1);
            means[sizes.cell(h, s, 0)] = (1.0 + epsilon) / 2.0;
            means[sizes.cell(h, s, arm)] = 0.5 + epsilon;
            hidden_arm.push(arm);
        }
    }
    Ok(HardInstance {
        family: RewardFamily::bernoulli(sizes, means)?,
        hidden_arm,
    })
}

/// `count` independent hard instances, seeded `seed, seed+1, ...`.
pub fn gen_hard_tasks(
    states: usize,
    actions: usize,
    horizon: usize,
    epsilon: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<HardInstance>> {
    (0..count)
        .map(|i| gen_hard_task_family(states, actions, horizon, epsilon, seed.wrapping_add(i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum Generator {
    RandomDense { states: usize, actions: usize },
    Chain {
        states: usize,
        #[serde(default = "default_slip")]
        slip: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        #[serde(default = "default_slip")]
        slip: f64,
    },
    UniformTransitionBandit {
        states: usize,
        actions: usize,
        epsilon: f64,
    },
}

fn default_slip() -> f64 {
    0.1
}

/// Fully determines an environment and its default task family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    #[serde(flatten)]
    pub generator: Generator,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Kind of task family to draw for an environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Environment-specific default.
    Default,
    Bernoulli,
    Deterministic,
    /// Hard construction with the given ε.
    Hard { epsilon: f64 },
    /// Goal-state navigation.
    Goal,
}

impl EnvSpec {
    pub fn build(&self) -> Result<TabularMdp> {
        match self.generator {
            Generator::RandomDense { states, actions } => {
                gen_random_dense(states, actions, self.horizon, self.seed)
            }
            Generator::Chain { states, slip } => gen_chain(states, self.horizon, slip),
            Generator::Gridworld { width, height, slip } => {
                gen_gridworld(width, height, self.horizon, slip)
            }
            Generator::UniformTransitionBandit { states, actions, .. } => {
                gen_uniform_transition(states, actions, self.horizon)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self.generator {
            Generator::RandomDense { .. } => "random-dense",
            Generator::Chain { .. } => "chain",
            Generator::Gridworld { .. } => "gridworld",
            Generator::UniformTransitionBandit { .. } => "uniform-transition-bandit",
        }
    }

    /// Draws `count` tasks. Task `i` depends only on (`seed`, `i`), so a
    /// prefix of a larger draw equals a smaller draw.
    pub fn tasks(&self, mdp: &TabularMdp, kind: TaskKind, count: usize, seed: u64) -> Result<Vec<RewardFamily>> {
        let sizes = mdp.sizes();
        let kind = match kind {
            TaskKind::Default => match self.generator {
                Generator::RandomDense { .. } => TaskKind::Bernoulli,
                Generator::Chain { .. } | Generator::Gridworld { .. } => TaskKind::Goal,
                Generator::UniformTransitionBandit { epsilon, .. } => TaskKind::Hard { epsilon },
            },
            k => k,
        };
        let mut root = RngStream::new(seed, "gen:task-seeds");
        let seeds: Vec<u64> = (0..count).map(|_| root.next_u64()).collect();
        seeds
            .into_iter()
            .enumerate()
            .map(|(i, task_seed)| match kind {
                TaskKind::Bernoulli | TaskKind::Default => Ok(random_bernoulli_task(sizes, task_seed)),
                TaskKind::Deterministic => Ok(random_deterministic_task(sizes, task_seed)),
                TaskKind::Hard { epsilon } => gen_hard_task_family(
                    sizes.states,
                    sizes.actions,
                    sizes.horizon,
                    epsilon,
                    task_seed,
                )
                .map(|inst| inst.family),
                TaskKind::Goal => goal_task(sizes, (sizes.states - 1 + i) % sizes.states),
            })
            .collect()
    }
}
