//! Lower-bound constructions for multi-task bandits: the two-arm collision
//! family, the minimax gap of a stochastic policy on it, the (n+1)-arm
//! hypothesis family, t*, and an empirical hardness sweep.

use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::Sizes;
use crate::reward::RewardFamily;
use crate::rng::RngStream;
use crate::ucbzero::{explore, AlgoParams};
use crate::envgen::gen_random_dense;

/// ε₀ for the hypothesis family.
pub const EPSILON_MAX: f64 = 0.125;

/// δ₀ = e⁻⁴ / 8.
pub fn delta_max() -> f64 {
    (-4.0f64).exp() / 8.0
}

/// The two-arm family: one task `p` and `N - 1` copies of `q`. Arm 1 of the
/// construction is action 0 and arm 2 is action 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoArmConstruction {
    pub episodes: u32,
    pub tasks: u64,
}

impl TwoArmConstruction {
    /// N = ⌈1 + 2^K ln 2⌉.
    pub fn new(episodes: u32) -> Result<Self> {
        if episodes > 60 {
            return Err(Error::Parameter(format!("K = {episodes} overflows the task count")));
        }
        let tasks = (1.0 + (2.0f64).powi(episodes as i32) * std::f64::consts::LN_2).ceil() as u64;
        Ok(Self { episodes, tasks })
    }

    pub fn sizes() -> Sizes {
        Sizes {
            states: 1,
            actions: 2,
            horizon: 1,
        }
    }

    /// Arm 1 pays 0.1, arm 2 pays 0.
    pub fn p_family() -> RewardFamily {
        RewardFamily::deterministic(Self::sizes(), vec![0.1, 0.0]).expect("valid means")
    }

    /// Arm 1 pays 0.1, arm 2 pays Bernoulli(0.5). Arm 1 is deterministic so
    /// it is encoded as a Bernoulli kernel only on arm 2.
    pub fn q_means() -> [f64; 2] {
        [0.1, 0.5]
    }

    pub fn optimal_arm_p() -> usize {
        0
    }

    pub fn optimal_arm_q() -> usize {
        1
    }

    pub fn collision_probability(&self) -> Result<f64> {
        collision_probability_analytic(self.episodes, self.tasks)
    }
}

/// 1 - (1 - 0.5^T2)^(N-1): the chance that some `q` instantiation shows
/// only zeros on arm 2 after `t2` pulls.
pub fn collision_probability_analytic(t2: u32, tasks: u64) -> Result<f64> {
    if tasks < 2 {
        return Err(Error::Parameter(format!("need N >= 2, got {tasks}")));
    }
    let miss = 0.5f64.powi(t2 as i32);
    Ok(-((tasks - 1) as f64 * (-miss).ln_1p()).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl McEstimate {
    /// Half-width of the normal-approximation interval at `z` standard errors.
    pub fn half_width(&self, z: f64) -> f64 {
        z * self.std_error
    }
}

/// Simulates N-1 independent Bernoulli(0.5)^T2 strings per trial and counts
/// trials in which at least one string is all zeros.
pub fn collision_probability_mc(t2: u32, tasks: u64, trials: u64, rng: &mut RngStream) -> Result<McEstimate> {
    if tasks < 2 {
        return Err(Error::Parameter(format!("need N >= 2, got {tasks}")));
    }
    if trials == 0 {
        return Err(Error::Parameter("need at least one trial".into()));
    }
    let words = t2.div_ceil(64);
    let tail_bits = t2 % 64;
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut hit = false;
        for _ in 0..tasks - 1 {
            let mut all_zero = true;
            for w in 0..words {
                let mut bits = rng.next_u64();
                if w + 1 == words && tail_bits != 0 {
                    bits &= (1u64 << tail_bits) - 1;
                }
                if bits != 0 {
                    all_zero = false;
                    break;
                }
            }
            if all_zero {
                hit = true;
                break;
            }
        }
        hits += hit as u64;
    }
    let estimate = hits as f64 / trials as f64;
    Ok(McEstimate {
        estimate,
        std_error: (estimate * (1.0 - estimate) / trials as f64).sqrt(),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimaxGap {
    pub x: f64,
    /// Gap under `q` when arm 1 is played with probability x: 0.4x.
    pub gap_q: f64,
    /// Gap under `p`: 0.1 - 0.1x.
    pub gap_p: f64,
    pub max: f64,
}

pub fn minimax_gap(x: f64) -> Result<MinimaxGap> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Parameter(format!("probability {x} outside [0, 1]")));
    }
    // q: V* = 0.5, V = 0.1x + 0.5(1 - x)
    let gap_q = 0.5 - (0.1 * x + 0.5 * (1.0 - x));
    // p: V* = 0.1, V = 0.1x
    let gap_p = 0.1 - 0.1 * x;
    Ok(MinimaxGap {
        x,
        gap_q,
        gap_p,
        max: gap_q.max(gap_p),
    })
}

/// Evaluates [`minimax_gap`] on `x = i / steps` and returns the minimiser of
/// the max (first one on ties).
pub fn minimax_grid(steps: usize) -> Result<MinimaxGap> {
    if steps == 0 {
        return Err(Error::Parameter("grid needs at least one step".into()));
    }
    let mut best = minimax_gap(0.0)?;
    for i in 1..=steps {
        let g = minimax_gap(i as f64 / steps as f64)?;
        if g.max < best.max {
            best = g;
        }
    }
    Ok(best)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= EPSILON_MAX) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside (0, 1/8]")));
    }
    Ok(())
}

/// Mean vectors H_0..H_n over arms 0..=n. Arm 0 always has (1+ε)/2; under
/// H_ℓ (ℓ >= 1) arm ℓ has 1/2 + ε; every other arm has 1/2.
pub fn hypothesis_family(n_arms: usize, epsilon: f64) -> Result<Vec<Vec<f64>>> {
    if n_arms < 2 {
        return Err(Error::Parameter(format!("need n >= 2 arms, got {n_arms}")));
    }
    check_epsilon(epsilon)?;
    let base: Vec<f64> = std::iter::once((1.0 + epsilon) / 2.0)
        .chain(std::iter::repeat_n(0.5, n_arms))
        .collect();
    Ok((0..=n_arms)
        .map(|l| {
            let mut h = base.clone();
            if l > 0 {
                h[l] = 0.5 + epsilon;
            }
            h
        })
        .collect())
}

/// t* = ln(N / (8δ)) / (c ε²).
pub fn t_star(epsilon: f64, delta: f64, tasks: u64, c_lb: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < EPSILON_MAX) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside (0, 1/8)")));
    }
    if !(delta > 0.0 && delta < delta_max()) {
        return Err(Error::Parameter(format!("delta {delta} outside (0, e^-4/8)")));
    }
    if tasks < 1 {
        return Err(Error::Parameter("need N >= 1".into()));
    }
    if !(c_lb > 0.0) {
        return Err(Error::Parameter(format!("constant {c_lb} must be positive")));
    }
    Ok((tasks as f64 / (8.0 * delta)).ln() / (c_lb * epsilon * epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardnessRow {
    pub tasks: usize,
    pub budget: usize,
    pub seed: u64,
    pub success_fraction: f64,
}

/// Settings for [`empirical_hardness_sweep`].
#[derive(Debug, Clone)]
pub struct HardnessSweep {
    pub n_arms: usize,
    pub epsilon: f64,
    pub task_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub budgets: Vec<usize>,
    /// Independent runs per (N, budget, seed) cell.
    pub trials: usize,
    /// Bonus constant of the reward-free pulling rule.
    pub bonus_c: f64,
}

/// Arm pulls of the reward-free optimistic learner on a single-state,
/// single-step problem with `arms` arms.
pub fn reward_free_pulls(arms: usize, budget: usize, bonus_c: f64) -> Result<Vec<u64>> {
    if budget == 0 {
        return Ok(vec![0; arms]);
    }
    let mdp = gen_random_dense(1, arms, 1, 0)?;
    let params = AlgoParams::new(mdp.sizes(), budget, 1, 0.1, bonus_c)?;
    let out = explore(&mdp, &params, &mut RngStream::new(0, "hardness:pulls"))?;
    Ok(out.state.counts().to_vec())
}

/// For every cell: pull arms with the reward-free learner, then in each run
/// draw an independent hypothesis and Bernoulli rewards per task, select
/// the arm with the highest empirical mean (lowest index on ties), and
/// count the runs in which every task's selection is its best arm.
pub fn empirical_hardness_sweep(cfg: &HardnessSweep) -> Result<Vec<HardnessRow>> {
    if cfg.task_grid.is_empty() || cfg.seeds.is_empty() || cfg.budgets.is_empty() {
        return Err(Error::Parameter("sweep grids must be non-empty".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::Parameter("need at least one trial".into()));
    }
    let hypotheses = hypothesis_family(cfg.n_arms, cfg.epsilon)?;
    let arms = cfg.n_arms + 1;
    let pulls: Vec<Vec<u64>> = cfg
        .budgets
        .iter()
        .map(|&b| reward_free_pulls(arms, b, cfg.bonus_c))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &tasks in &cfg.task_grid {
        for &seed in &cfg.seeds {
            for (bi, &budget) in cfg.budgets.iter().enumerate() {
                let mut rng = RngStream::new(seed, format!("hardness:n{tasks}:b{budget}"));
                let counts = &pulls[bi];
                let mut successes = 0usize;
                for _ in 0..cfg.trials {
                    let mut all_right = true;
                    for _ in 0..tasks {
                        let l = rng.below(arms);
                        if select_arm(&hypotheses[l], counts, &mut rng) != l {
                            all_right = false;
                            break;
                        }
                    }
                    successes += all_right as usize;
                }
                rows.push(HardnessRow {
                    tasks,
                    budget,
                    seed,
                    success_fraction: successes as f64 / cfg.trials as f64,
                });
            }
        }
    }
    Ok(rows)
}

fn select_arm(means: &[f64], counts: &[u64], rng: &mut RngStream) -> usize {
    let mut best = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for (arm, (&p, &n)) in means.iter().zip(counts).enumerate() {
        let mean = if n == 0 {
            0.0
        } else {
            let ones = Binomial::new(n, p).expect("valid binomial").sample(rng.inner());
            ones as f64 / n as f64
        };
        if mean > best_mean {
            best = arm;
            best_mean = mean;
        }
    }
    best
}

/// Smallest budget whose success fraction reaches `threshold`, per
/// (tasks, seed). Budgets never reaching it map to `None`.
pub fn budget_to_success(rows: &[HardnessRow], tasks: usize, seed: u64, threshold: f64) -> Option<usize> {
    rows.iter()
        .filter(|r| r.tasks == tasks && r.seed == seed && r.success_fraction >= threshold)
        .map(|r| r.budget)
        .min()
}

/// Median over `seeds` of [`budget_to_success`], counting seeds that never
/// reach the threshold as infinitely expensive. `None` when the median
/// itself is infinite.
pub fn median_budget_to_success(rows: &[HardnessRow], tasks: usize, seeds: &[u64], threshold: f64) -> Option<f64> {
    if seeds.is_empty() {
        return None;
    }
    let mut budgets: Vec<f64> = seeds
        .iter()
        .map(|&s| budget_to_success(rows, tasks, s, threshold).map_or(f64::INFINITY, |b| b as f64))
        .collect();
    let m = crate::analysis::median(&mut budgets);
    m.is_finite().then_some(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn analytic_collision_values() {
        assert_abs_diff_eq!(collision_probability_analytic(1, 2).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(collision_probability_analytic(0, 5).unwrap(), 1.0);
        let expected = 1.0 - 0.875f64.powi(9);
        assert_abs_diff_eq!(collision_probability_analytic(3, 10).unwrap(), expected, epsilon = 1e-14);
        assert!(collision_probability_analytic(3, 1).is_err());
    }

    #[test]
    fn construction_collides_at_least_half_the_time() {
        for k in 1..=20 {
            let c = TwoArmConstruction::new(k).unwrap();
            assert!(c.tasks >= 2);
            assert!(c.collision_probability().unwrap() >= 0.5, "K = {k}");
        }
    }

    #[test]
    fn construction_optimal_arms() {
        let p = TwoArmConstruction::p_family();
        let mdp = gen_random_dense(1, 2, 1, 0).unwrap();
        let (_, pi) = crate::solver::optimal_values(&mdp, &p).unwrap();
        assert_eq!(pi.action(0, 0), TwoArmConstruction::optimal_arm_p());
        let q = RewardFamily::bernoulli(TwoArmConstruction::sizes(), TwoArmConstruction::q_means().to_vec()).unwrap();
        let (_, pi) = crate::solver::optimal_values(&mdp, &q).unwrap();
        assert_eq!(pi.action(0, 0), TwoArmConstruction::optimal_arm_q());
    }

    #[test]
    fn mc_zero_pulls_always_collides() {
        let est = collision_probability_mc(0, 4, 1000, &mut RngStream::new(0, "mc")).unwrap();
        assert_eq!(est.estimate, 1.0);
    }

    #[test]
    fn mc_matches_analytic_small() {
        let est = collision_probability_mc(1, 2, 100_000, &mut RngStream::new(1, "mc")).unwrap();
        assert!((est.estimate - 0.5).abs() < 0.02);
        let long = collision_probability_mc(70, 3, 2000, &mut RngStream::new(1, "mc")).unwrap();
        assert_eq!(long.estimate, 0.0);
    }

    #[test]
    fn minimax_points() {
        let g = minimax_gap(0.2).unwrap();
        assert_abs_diff_eq!(g.max, 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(minimax_gap(0.0).unwrap().max, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(minimax_gap(1.0).unwrap().max, 0.4, epsilon = 1e-15);
        assert!(minimax_gap(1.1).is_err());
        let best = minimax_grid(1000).unwrap();
        assert_abs_diff_eq!(best.x, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(best.max, 0.08, epsilon = 1e-12);
    }

    #[test]
    fn hypotheses() {
        let h = hypothesis_family(2, 0.1).unwrap();
        assert_eq!(h.len(), 3);
        assert_abs_diff_eq!(h[0][0], 0.55, epsilon = 1e-15);
        assert_eq!(&h[0][1..], &[0.5, 0.5]);
        for (l, means) in h.iter().enumerate() {
            let best = crate::solver::argmax(means).0;
            assert_eq!(best, l);
            assert!(means.iter().all(|m| (0.0..=1.0).contains(m)));
            if l > 0 {
                assert_abs_diff_eq!(means[l] - means[0], 0.05, epsilon = 1e-15);
            }
        }
        assert!(hypothesis_family(1, 0.1).is_err());
        assert!(hypothesis_family(3, 0.2).is_err());
    }

    #[test]
    fn t_star_values() {
        let t = t_star(0.1, 1e-3, 1, 100.0).unwrap();
        assert_abs_diff_eq!(t, 125.0f64.ln(), epsilon = 1e-12);
        let t2 = t_star(0.1, 1e-3, 2, 100.0).unwrap();
        assert_abs_diff_eq!(t2 - t, std::f64::consts::LN_2 / (100.0 * 0.01), epsilon = 1e-12);
        assert!(t_star(0.1, delta_max(), 1, 100.0).is_err());
        assert!(t_star(0.125, 1e-3, 1, 100.0).is_err());
    }

    #[test]
    fn reward_free_pulls_are_round_robin() {
        let counts = reward_free_pulls(5, 23, 0.01).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 23);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn zero_budget_success_is_guessing_rate() {
        let cfg = HardnessSweep {
            n_arms: 3,
            epsilon: 0.1,
            task_grid: vec![1, 2],
            seeds: vec![1],
            budgets: vec![0],
            trials: 20_000,
            bonus_c: 1.0,
        };
        let rows = empirical_hardness_sweep(&cfg).unwrap();
        // arm 0 wins every tie, so only H_0 tasks succeed
        assert!((rows[0].success_fraction - 0.25).abs() < 0.02);
        assert!((rows[1].success_fraction - 0.0625).abs() < 0.01);
    }

    #[test]
    fn median_budget_handles_unreached_seeds() {
        let row = |seed, budget, success_fraction| HardnessRow {
            tasks: 1,
            budget,
            seed,
            success_fraction,
        };
        let rows = [row(0, 10, 0.95), row(1, 10, 0.5), row(1, 20, 0.92), row(2, 20, 0.1)];
        assert_eq!(median_budget_to_success(&rows, 1, &[0, 1, 2], 0.9), Some(20.0));
        assert_eq!(median_budget_to_success(&rows, 1, &[0, 1], 0.9), Some(15.0));
        assert_eq!(median_budget_to_success(&rows, 1, &[1, 2], 0.9), None);
    }

    #[test]
    fn large_budget_single_task_succeeds() {
        let cfg = HardnessSweep {
            n_arms: 2,
            epsilon: 0.1,
            task_grid: vec![1],
            seeds: vec![3],
            budgets: vec![30_000],
            trials: 400,
            bonus_c: 1.0,
        };
        let rows = empirical_hardness_sweep(&cfg).unwrap();
        assert!(rows[0].success_fraction >= 0.95);
    }
}
