//! Reference algorithms: online UCB-H, certainty-equivalence planning on an
//! empirical model, and the naive one-run-per-task baseline.

use rayon::prelude::*;

use crate::analysis::GapTracker;
use crate::dataset::{ExplorationDataset, Transition};
use crate::error::{Error, Result};
use crate::mdp::{Sizes, TabularMdp};
use crate::reward::RewardFamily;
use crate::rng::RngStream;
use crate::solver::{optimal_values_from_means, DeterministicPolicy, MixturePolicy, PolicyEvaluator};
use crate::ucbzero::{AlgoParams, LearnerMode, LearnerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Learn from sampled rewards.
    Observed,
    /// Feed zero reward to every update; the reward stream is never touched.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcbHOptions {
    pub reward: RewardMode,
    /// Multiplier applied to b_t.
    pub bonus_multiplier: f64,
}

impl Default for UcbHOptions {
    fn default() -> Self {
        Self {
            reward: RewardMode::Observed,
            bonus_multiplier: 1.0,
        }
    }
}

impl UcbHOptions {
    /// Zero reward with a doubled bonus.
    pub fn zero_reward() -> Self {
        Self {
            reward: RewardMode::Zero,
            bonus_multiplier: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UcbHOutcome {
    pub trajectory: ExplorationDataset,
    /// Greedy policy at the top of each episode (the policy that was played).
    pub policies: MixturePolicy,
    /// V*_1(s_1) - V^{π_k}_1(s_1) per episode.
    pub regret: Vec<f64>,
    pub state: LearnerState,
}

impl UcbHOutcome {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.regret
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }
}

/// Online optimistic Q-learning with Hoeffding bonuses for `params.episodes`
/// episodes. Transitions come from `env_rng` (one draw per step), rewards
/// from `reward_rng`.
pub fn ucb_h(
    mdp: &TabularMdp,
    family: &RewardFamily,
    params: &AlgoParams,
    options: UcbHOptions,
    env_rng: &mut RngStream,
    reward_rng: &mut RngStream,
) -> Result<UcbHOutcome> {
    let sz = mdp.sizes();
    if family.sizes() != sz {
        return Err(Error::Shape("reward family does not match MDP".into()));
    }
    if params.horizon != sz.horizon {
        return Err(Error::Shape("parameters do not match MDP horizon".into()));
    }
    let scale = options.bonus_multiplier * params.bonus_scale();
    let mut evaluator = PolicyEvaluator::new(mdp, family)?;
    let (v_star, _) = optimal_values_from_means(mdp, evaluator.means())?;
    let v_star = v_star.start_value();

    let mut state = LearnerState::new(sz, LearnerMode::PolicyOptimization);
    let mut trajectory = ExplorationDataset::with_capacity(sz, params.episodes);
    let mut policies = Vec::with_capacity(params.episodes);
    let mut regret = Vec::with_capacity(params.episodes);
    let mut episode = Vec::with_capacity(sz.horizon);
    for _ in 0..params.episodes {
        let policy = state.greedy_policy();
        regret.push(v_star - evaluator.start_value(&policy));
        policies.push(policy);
        episode.clear();
        let mut s = mdp.start_state();
        for h in 0..sz.horizon {
            let a = state.greedy_action(h, s);
            let next = mdp.step(h, s, a, env_rng);
            let r = match options.reward {
                RewardMode::Observed => family.draw(h, s, a, next, reward_rng),
                RewardMode::Zero => 0.0,
            };
            state.update(h, s, a, r, next, scale);
            episode.push(Transition { state: s, action: a, next });
            s = next;
        }
        trajectory.push_episode(&episode);
    }
    Ok(UcbHOutcome {
        trajectory,
        policies: MixturePolicy::new(policies)?,
        regret,
        state,
    })
}

/// Count-based model of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    sizes: Sizes,
    visits: Vec<u64>,
    transition_counts: Vec<u64>,
    p_hat: Vec<f64>,
    r_hat: Vec<f64>,
}

impl EmpiricalModel {
    /// A model that reports the true transitions of `mdp` with zero counts.
    pub fn from_mdp(mdp: &TabularMdp, r_hat: Vec<f64>) -> Result<Self> {
        let sizes = mdp.sizes();
        if r_hat.len() != sizes.cells() {
            return Err(Error::Shape(format!("{} rewards for {} cells", r_hat.len(), sizes.cells())));
        }
        Ok(Self {
            sizes,
            visits: vec![0; sizes.cells()],
            transition_counts: vec![0; sizes.cells() * sizes.states],
            p_hat: mdp.transitions().to_vec(),
            r_hat,
        })
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    pub fn visits(&self, h: usize, s: usize, a: usize) -> u64 {
        self.visits[self.sizes.cell(h, s, a)]
    }

    pub fn transition_count(&self, h: usize, s: usize, a: usize, next: usize) -> u64 {
        self.transition_counts[self.sizes.cell(h, s, a) * self.sizes.states + next]
    }

    /// P̂_h(s' | s, a).
    pub fn p_hat(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.p_hat[self.sizes.cell(h, s, a) * self.sizes.states + next]
    }

    pub fn p_hat_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let i = self.sizes.cell(h, s, a) * self.sizes.states;
        &self.p_hat[i..i + self.sizes.states]
    }

    /// r̂_h(s, a).
    pub fn r_hat(&self, h: usize, s: usize, a: usize) -> f64 {
        self.r_hat[self.sizes.cell(h, s, a)]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.r_hat
    }

    /// The estimated transitions as an MDP.
    pub fn to_mdp(&self) -> TabularMdp {
        TabularMdp::from_raw(self.sizes, self.p_hat.clone()).expect("shape is consistent")
    }
}

/// P̂ = n(h,s,a,s') / n(h,s,a) on visited cells and uniform elsewhere; r̂ is
/// the empirical mean reward where visited and 0 elsewhere.
pub fn build_empirical_model(dataset: &ExplorationDataset, rewards: Option<&[f64]>) -> Result<EmpiricalModel> {
    let sz = dataset.sizes();
    if let Some(r) = rewards {
        if r.len() != dataset.steps().len() {
            return Err(Error::Shape(format!(
                "{} rewards for {} steps",
                r.len(),
                dataset.steps().len()
            )));
        }
    }
    let states = sz.states;
    let mut visits = vec![0u64; sz.cells()];
    let mut transition_counts = vec![0u64; sz.cells() * states];
    let mut reward_sums = vec![0.0; sz.cells()];
    for (i, t) in dataset.steps().iter().enumerate() {
        let cell = sz.cell(i % sz.horizon, t.state, t.action);
        visits[cell] += 1;
        transition_counts[cell * states + t.next] += 1;
        if let Some(r) = rewards {
            reward_sums[cell] += r[i];
        }
    }
    let mut p_hat = vec![0.0; sz.cells() * states];
    let mut r_hat = vec![0.0; sz.cells()];
    for cell in 0..sz.cells() {
        let row = &mut p_hat[cell * states..(cell + 1) * states];
        let n = visits[cell];
        if n == 0 {
            row.fill(1.0 / states as f64);
        } else {
            for (p, &c) in row.iter_mut().zip(&transition_counts[cell * states..]) {
                *p = c as f64 / n as f64;
            }
            r_hat[cell] = (reward_sums[cell] / n as f64).clamp(0.0, 1.0);
        }
    }
    Ok(EmpiricalModel {
        sizes: sz,
        visits,
        transition_counts,
        p_hat,
        r_hat,
    })
}

/// Plans optimally in the empirical model.
pub fn tce_plan(model: &EmpiricalModel) -> Result<DeterministicPolicy> {
    let (_, policy) = optimal_values_from_means(&model.to_mdp(), &model.r_hat)?;
    Ok(policy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveTaskOutcome {
    pub episodes: usize,
    pub optimal_value: f64,
    pub mixture_value: f64,
    pub gap: f64,
}

/// Splits `total_episodes` evenly (remainder dropped) and runs single-task
/// UCB-H on every task with its own streams `"naive:task-<n>:env"` and
/// `"naive:task-<n>:reward"`. Gaps are those of each run's uniform mixture.
pub fn naive_multitask(
    mdp: &TabularMdp,
    families: &[RewardFamily],
    total_episodes: usize,
    failure_prob: f64,
    bonus_c: f64,
    seed: u64,
) -> Result<Vec<NaiveTaskOutcome>> {
    if families.is_empty() {
        return Err(Error::Parameter("at least one task is required".into()));
    }
    let per_task = total_episodes / families.len();
    if per_task == 0 {
        return Err(Error::Parameter(format!(
            "{total_episodes} episodes cannot be split across {} tasks",
            families.len()
        )));
    }
    let params = AlgoParams::new(mdp.sizes(), per_task, 1, failure_prob, bonus_c)?;
    families
        .par_iter()
        .enumerate()
        .map(|(n, family)| {
            let mut env = RngStream::new(seed, format!("naive:task-{n}:env"));
            let mut rew = RngStream::new(seed, format!("naive:task-{n}:reward"));
            let out = ucb_h(mdp, family, &params, UcbHOptions::default(), &mut env, &mut rew)?;
            let mut tracker = GapTracker::new(mdp, family, Vec::new())?;
            for p in out.policies.policies() {
                tracker.push(p);
            }
            Ok(NaiveTaskOutcome {
                episodes: per_task,
                optimal_value: tracker.optimal_value(),
                mixture_value: tracker.mixture_value(),
                gap: tracker.gap(),
            })
        })
        .collect()
}
