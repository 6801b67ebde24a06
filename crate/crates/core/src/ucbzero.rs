//! Task-agnostic exploration with optimistic Q-learning.
//!
//! The exploration phase runs Q-learning on a pseudo-Q table whose only
//! signal is a doubled Hoeffding bonus, so acting greedily steers towards
//! rarely visited cells. It never sees a reward. The policy-optimisation phase
//! replays the collected transitions once per task with sampled rewards and a
//! single bonus, and returns the uniform mixture of the greedy policies taken
//! at the top of every replayed episode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::GapTracker;
use crate::dataset::{ExplorationDataset, RewardAugmentedDataset, Transition};
use crate::error::{Error, Result};
use crate::mdp::{Sizes, TabularMdp};
use crate::reward::RewardFamily;
use crate::rng::RngStream;
use crate::solver::{argmax, DeterministicPolicy, MixturePolicy};

/// Algorithm parameters. `iota` is derived as ln(S·A·H·K / p) by
/// [`AlgoParams::new`] but kept as a plain field so it can be pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub horizon: usize,
    /// Episode budget K, fixed before exploration starts.
    pub episodes: usize,
    /// Number of tasks N.
    pub tasks: usize,
    /// Failure probability p.
    pub failure_prob: f64,
    /// Bonus constant c.
    pub bonus_c: f64,
    pub iota: f64,
}

impl AlgoParams {
    pub fn new(sizes: Sizes, episodes: usize, tasks: usize, failure_prob: f64, bonus_c: f64) -> Result<Self> {
        if episodes == 0 {
            return Err(Error::Parameter("episode budget K must be positive".into()));
        }
        if tasks == 0 {
            return Err(Error::Parameter("task count N must be positive".into()));
        }
        if !(failure_prob > 0.0 && failure_prob < 1.0) {
            return Err(Error::Parameter(format!(
                "failure probability {failure_prob} outside (0, 1)"
            )));
        }
        if !(bonus_c > 0.0 && bonus_c.is_finite()) {
            return Err(Error::Parameter(format!("bonus constant {bonus_c} must be positive")));
        }
        let iota = ((sizes.states * sizes.actions * sizes.horizon) as f64 * episodes as f64
            / failure_prob)
            .ln();
        Ok(Self {
            horizon: sizes.horizon,
            episodes,
            tasks,
            failure_prob,
            bonus_c,
            iota,
        })
    }

    /// Same parameters for a different task count; ι is unchanged.
    pub fn with_tasks(mut self, tasks: usize) -> Self {
        self.tasks = tasks;
        self
    }

    /// c·sqrt(H³(ln N + ι)), so that b_t = scale / sqrt(t).
    pub fn bonus_scale(&self) -> f64 {
        let h = self.horizon as f64;
        self.bonus_c * (h * h * h * ((self.tasks as f64).ln() + self.iota)).sqrt()
    }

    fn check(&self, sizes: Sizes) -> Result<()> {
        if self.horizon != sizes.horizon {
            return Err(Error::Shape(format!(
                "parameters built for horizon {} used with horizon {}",
                self.horizon, sizes.horizon
            )));
        }
        if !(self.iota > 0.0) {
            return Err(Error::Parameter(format!("iota {} must be positive", self.iota)));
        }
        Ok(())
    }
}

/// α_t = (H + 1) / (H + t).
pub fn learning_rate(t: u64, horizon: usize) -> Result<f64> {
    if t < 1 {
        return Err(Error::Parameter("learning rate needs t >= 1".into()));
    }
    if horizon < 1 {
        return Err(Error::Parameter("learning rate needs H >= 1".into()));
    }
    Ok(alpha(t, horizon))
}

#[inline]
fn alpha(t: u64, horizon: usize) -> f64 {
    (horizon as f64 + 1.0) / (horizon as f64 + t as f64)
}

/// b_t = c·sqrt(H³(ln N + ι) / t).
pub fn bonus(t: u64, params: &AlgoParams) -> Result<f64> {
    if t < 1 {
        return Err(Error::Parameter("bonus needs t >= 1".into()));
    }
    Ok(params.bonus_scale() / (t as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LearnerMode {
    /// Pseudo-Q, no reward, bonus 2·b_t.
    Exploration,
    /// Reward plus bonus b_t.
    PolicyOptimization,
}

impl LearnerMode {
    pub fn bonus_multiplier(self) -> f64 {
        match self {
            LearnerMode::Exploration => 2.0,
            LearnerMode::PolicyOptimization => 1.0,
        }
    }
}

/// Q table and visit counts of an optimistic Q-learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    sizes: Sizes,
    mode: LearnerMode,
    q: Vec<f64>,
    counts: Vec<u64>,
}

impl LearnerState {
    pub fn new(sizes: Sizes, mode: LearnerMode) -> Self {
        Self {
            sizes,
            mode,
            q: vec![sizes.horizon as f64; sizes.cells()],
            counts: vec![0; sizes.cells()],
        }
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    pub fn mode(&self) -> LearnerMode {
        self.mode
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[self.sizes.cell(h, s, a)]
    }

    pub fn count(&self, h: usize, s: usize, a: usize) -> u64 {
        self.counts[self.sizes.cell(h, s, a)]
    }

    pub fn q_table(&self) -> &[f64] {
        &self.q
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.sizes.cell(h, s, 0);
        &self.q[start..start + self.sizes.actions]
    }

    #[inline]
    pub fn greedy_action(&self, h: usize, s: usize) -> usize {
        argmax(self.q_row(h, s)).0
    }

    /// min(H, max_a Q_h(s, a)), and 0 past the horizon.
    #[inline]
    pub fn value(&self, h: usize, s: usize) -> f64 {
        if h == self.sizes.horizon {
            return 0.0;
        }
        argmax(self.q_row(h, s)).1.min(self.sizes.horizon as f64)
    }

    /// One Q-learning step on (h, s, a) -> next with the given reward.
    /// `bonus_scale` already includes the mode's multiplier. Returns the new
    /// visit count t.
    #[inline]
    pub fn update(&mut self, h: usize, s: usize, a: usize, reward: f64, next: usize, bonus_scale: f64) -> u64 {
        let i = self.sizes.cell(h, s, a);
        self.counts[i] += 1;
        let t = self.counts[i];
        let v_next = self.value(h + 1, next);
        let lr = alpha(t, self.sizes.horizon);
        let b = bonus_scale / (t as f64).sqrt();
        self.q[i] = (1.0 - lr) * self.q[i] + lr * (reward + v_next + b);
        t
    }

    pub fn greedy_policy(&self) -> DeterministicPolicy {
        DeterministicPolicy::greedy(self.sizes, &self.q)
    }
}

/// Output of the exploration phase.
#[derive(Debug, Clone)]
pub struct ExplorationOutcome {
    pub dataset: ExplorationDataset,
    pub state: LearnerState,
    /// V̄^k_1(s_1) recorded at the top of each episode.
    pub start_values: Vec<f64>,
}

/// Reward-free exploration for `params.episodes` episodes. Only `rng` drives
/// the environment; exactly one uniform draw is consumed per step.
pub fn explore(mdp: &TabularMdp, params: &AlgoParams, rng: &mut RngStream) -> Result<ExplorationOutcome> {
    explore_with(mdp, params, rng, |_| ())
}

/// [`explore`] with a hook called on the learner after every update.
pub fn explore_with<F>(mdp: &TabularMdp, params: &AlgoParams, rng: &mut RngStream, mut after_update: F) -> Result<ExplorationOutcome>
where
    F: FnMut(&LearnerState),
{
    let sz = mdp.sizes();
    params.check(sz)?;
    let scale = LearnerMode::Exploration.bonus_multiplier() * params.bonus_scale();
    let mut state = LearnerState::new(sz, LearnerMode::Exploration);
    let mut dataset = ExplorationDataset::with_capacity(sz, params.episodes);
    let mut start_values = Vec::with_capacity(params.episodes);
    let mut episode = Vec::with_capacity(sz.horizon);
    for _ in 0..params.episodes {
        let mut s = mdp.start_state();
        start_values.push(state.value(0, s));
        episode.clear();
        for h in 0..sz.horizon {
            let a = state.greedy_action(h, s);
            let next = mdp.step(h, s, a, rng);
            state.update(h, s, a, 0.0, next, scale);
            after_update(&state);
            episode.push(Transition { state: s, action: a, next });
            s = next;
        }
        dataset.push_episode(&episode);
    }
    Ok(ExplorationOutcome {
        dataset,
        state,
        start_values,
    })
}

/// Samples one reward per collected transition from `family`.
pub fn instantiate_rewards(
    dataset: &ExplorationDataset,
    family: &RewardFamily,
    rng: &mut RngStream,
) -> Result<RewardAugmentedDataset> {
    if family.sizes() != dataset.sizes() {
        return Err(Error::Shape(format!(
            "reward family sized {:?} used with dataset sized {:?}",
            family.sizes(),
            dataset.sizes()
        )));
    }
    let h_len = dataset.sizes().horizon;
    let rewards = dataset
        .steps()
        .iter()
        .enumerate()
        .map(|(i, t)| family.draw(i % h_len, t.state, t.action, t.next, rng))
        .collect();
    RewardAugmentedDataset::new(dataset.clone(), rewards)
}

/// Output of the policy-optimisation phase.
#[derive(Debug, Clone)]
pub struct PolicyOptOutcome {
    pub mixture: MixturePolicy,
    /// V^k_1(s_1) = min(H, max_a Q^k_1(s_1, a)) at the top of each episode.
    pub start_values: Vec<f64>,
    pub state: LearnerState,
}

/// Replays the augmented dataset and returns the uniform mixture over the
/// per-episode greedy policies.
pub fn policy_optimize(aug: &RewardAugmentedDataset, params: &AlgoParams, sizes: Sizes) -> Result<PolicyOptOutcome> {
    let mut policies = Vec::with_capacity(aug.num_episodes());
    let mut start_values = Vec::with_capacity(aug.num_episodes());
    let state = replay(aug, params, sizes, |_, pi, v| {
        policies.push(pi.clone());
        start_values.push(v);
    })?;
    Ok(PolicyOptOutcome {
        mixture: MixturePolicy::new(policies)?,
        start_values,
        state,
    })
}

/// Streaming form of [`policy_optimize`]: `visit(k, π_k, V^k_1(s_1))` is
/// called at the top of every episode before its updates.
pub fn replay<F>(aug: &RewardAugmentedDataset, params: &AlgoParams, sizes: Sizes, mut visit: F) -> Result<LearnerState>
where
    F: FnMut(usize, &DeterministicPolicy, f64),
{
    if aug.sizes() != sizes {
        return Err(Error::Shape(format!(
            "dataset sized {:?}, expected {:?}",
            aug.sizes(),
            sizes
        )));
    }
    if aug.num_episodes() != params.episodes {
        return Err(Error::Shape(format!(
            "dataset has {} episodes but parameters were built for K = {}",
            aug.num_episodes(),
            params.episodes
        )));
    }
    params.check(sizes)?;
    let scale = LearnerMode::PolicyOptimization.bonus_multiplier() * params.bonus_scale();
    let mut state = LearnerState::new(sizes, LearnerMode::PolicyOptimization);
    let mut policy = state.greedy_policy();
    let rewards = aug.rewards();
    for (k, episode) in aug.dataset().episodes().enumerate() {
        policy.fill_greedy(&state.q);
        visit(k, &policy, state.value(0, 0));
        for (h, t) in episode.iter().enumerate() {
            let r = rewards[k * sizes.horizon + h];
            state.update(h, t.state, t.action, r, t.next, scale);
        }
    }
    Ok(state)
}

/// Options for [`run_task_agnostic`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Episode counts (1-based prefix lengths) at which to record the mixture gap.
    pub checkpoints: Vec<usize>,
    /// Keep every task's full mixture. Memory is K·H·S per task.
    pub keep_mixtures: bool,
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub optimal_value: f64,
    pub mixture_value: f64,
    /// V*_1(s_1) - V^mix_1(s_1).
    pub gap: f64,
    /// (k, gap of the mixture over the first k policies) per checkpoint.
    pub gap_curve: Vec<(usize, f64)>,
    pub mixture: Option<MixturePolicy>,
}

#[derive(Debug, Clone)]
pub struct TaskAgnosticRun {
    pub exploration: ExplorationOutcome,
    pub tasks: Vec<TaskOutcome>,
}

impl TaskAgnosticRun {
    pub fn max_gap(&self) -> f64 {
        self.tasks.iter().map(|t| t.gap).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Explores once, then optimises every task on the shared dataset.
///
/// Streams: `"explore"` drives the environment and `"reward:task-<n>"` draws
/// the rewards of task n, all under `seed`.
pub fn run_task_agnostic(
    mdp: &TabularMdp,
    families: &[RewardFamily],
    params: &AlgoParams,
    seed: u64,
    options: &RunOptions,
) -> Result<TaskAgnosticRun> {
    if families.is_empty() {
        return Err(Error::Parameter("at least one task is required".into()));
    }
    if params.tasks != families.len() {
        return Err(Error::Parameter(format!(
            "parameters built for N = {} but {} tasks given",
            params.tasks,
            families.len()
        )));
    }
    let mut env_rng = RngStream::new(seed, "explore");
    let exploration = explore(mdp, params, &mut env_rng)?;
    let sizes = mdp.sizes();
    let tasks = families
        .par_iter()
        .enumerate()
        .map(|(n, family)| {
            let mut rng = RngStream::new(seed, format!("reward:task-{n}"));
            let aug = instantiate_rewards(&exploration.dataset, family, &mut rng)?;
            let mut tracker = GapTracker::new(mdp, family, options.checkpoints.clone())?;
            let mut kept = Vec::new();
            replay(&aug, params, sizes, |_, pi, _| {
                tracker.push(pi);
                if options.keep_mixtures {
                    kept.push(pi.clone());
                }
            })?;
            Ok(TaskOutcome {
                optimal_value: tracker.optimal_value(),
                mixture_value: tracker.mixture_value(),
                gap: tracker.gap(),
                gap_curve: tracker.curve().to_vec(),
                mixture: if options.keep_mixtures {
                    Some(MixturePolicy::new(kept)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskAgnosticRun { exploration, tasks })
}
