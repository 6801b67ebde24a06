//! Exact dynamic programming on known models: optimal values, policy and
//! mixture evaluation, reachability, and an exhaustive-enumeration oracle.

use rayon::prelude::*;

use crate::error::{check_index, Error, Result};
use crate::mdp::{Sizes, TabularMdp};
use crate::reward::RewardFamily;

/// Largest policy count `brute_force_optimal` will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// A time-dependent deterministic policy, one action per (h, s).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicPolicy {
    sizes: Sizes,
    actions: Vec<u32>,
}

impl DeterministicPolicy {
    pub fn constant(sizes: Sizes, action: usize) -> Result<Self> {
        check_index("action", action, sizes.actions)?;
        Ok(Self {
            sizes,
            actions: vec![action as u32; sizes.horizon * sizes.states],
        })
    }

    /// Builds a policy from an (h, s)-major action table.
    pub fn from_actions(sizes: Sizes, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != sizes.horizon * sizes.states {
            return Err(Error::Shape(format!(
                "policy table has {} entries, expected {}",
                actions.len(),
                sizes.horizon * sizes.states
            )));
        }
        for &a in &actions {
            check_index("action", a, sizes.actions)?;
        }
        Ok(Self {
            sizes,
            actions: actions.into_iter().map(|a| a as u32).collect(),
        })
    }

    /// Greedy policy of a Q table laid out like [`Sizes::cell`]; ties go to
    /// the lowest action index.
    pub fn greedy(sizes: Sizes, q: &[f64]) -> Self {
        let mut actions = Vec::with_capacity(sizes.horizon * sizes.states);
        for cell in q.chunks(sizes.actions) {
            actions.push(argmax(cell).0 as u32);
        }
        Self { sizes, actions }
    }

    pub(crate) fn fill_greedy(&mut self, q: &[f64]) {
        for (slot, cell) in self.actions.iter_mut().zip(q.chunks(self.sizes.actions)) {
            *slot = argmax(cell).0 as u32;
        }
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[self.sizes.step_state(h, s)] as usize
    }

    pub fn actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.actions.iter().map(|&a| a as usize)
    }
}

/// Value and action-value tables over steps `0..=H`, with `V_H = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    sizes: Sizes,
    v: Vec<f64>,
    q: Vec<f64>,
}

impl ValueTables {
    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    /// `V_h(s)` for `h` in `0..=H`.
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.sizes.states + s]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[self.sizes.cell(h, s, a)]
    }

    /// Value of the start state at the first step.
    pub fn start_value(&self) -> f64 {
        self.v[0]
    }

    pub fn q_table(&self) -> &[f64] {
        &self.q
    }

    pub fn v_table(&self) -> &[f64] {
        &self.v
    }
}

/// An ordered list of deterministic policies, executed by drawing one
/// uniformly at the start of an episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixturePolicy {
    policies: Vec<DeterministicPolicy>,
}

impl MixturePolicy {
    pub fn new(policies: Vec<DeterministicPolicy>) -> Result<Self> {
        let first = policies
            .first()
            .ok_or_else(|| Error::Parameter("mixture policy must be non-empty".into()))?;
        if policies.iter().any(|p| p.sizes != first.sizes) {
            return Err(Error::Shape("mixture components differ in size".into()));
        }
        Ok(Self { policies })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policies(&self) -> &[DeterministicPolicy] {
        &self.policies
    }

    pub fn sizes(&self) -> Sizes {
        self.policies[0].sizes
    }
}

/// First index of the maximum; ties resolve to the lowest index.
#[inline]
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_v = values[0];
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    (best, best_v)
}

/// Backward induction with the optimal Bellman equation on an explicit
/// mean-reward table.
pub fn optimal_values_from_means(
    mdp: &TabularMdp,
    means: &[f64],
) -> Result<(ValueTables, DeterministicPolicy)> {
    let sz = mdp.sizes();
    if means.len() != sz.cells() {
        return Err(Error::Shape(format!(
            "mean table has {} entries, expected {}",
            means.len(),
            sz.cells()
        )));
    }
    let (states, actions) = (sz.states, sz.actions);
    let mut v = vec![0.0; (sz.horizon + 1) * states];
    let mut q = vec![0.0; sz.cells()];
    let mut policy = vec![0u32; sz.horizon * states];
    for h in (0..sz.horizon).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * states);
        let next = &tail[..states];
        for s in 0..states {
            for a in 0..actions {
                let i = sz.cell(h, s, a);
                q[i] = means[i] + mdp.expect(h, s, a, next);
            }
            let (a, best) = argmax(&q[sz.cell(h, s, 0)..sz.cell(h, s, 0) + actions]);
            head[h * states + s] = best;
            policy[h * states + s] = a as u32;
        }
    }
    Ok((
        ValueTables { sizes: sz, v, q },
        DeterministicPolicy {
            sizes: sz,
            actions: policy,
        },
    ))
}

/// Optimal values V*, Q* and the greedy optimal policy.
pub fn optimal_values(
    mdp: &TabularMdp,
    family: &RewardFamily,
) -> Result<(ValueTables, DeterministicPolicy)> {
    optimal_values_from_means(mdp, &family.mean_table(mdp)?)
}

fn check_policy(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<()> {
    if policy.sizes != mdp.sizes() {
        return Err(Error::Shape(format!(
            "policy sized {:?} used with MDP sized {:?}",
            policy.sizes,
            mdp.sizes()
        )));
    }
    Ok(())
}

pub fn evaluate_policy_from_means(
    mdp: &TabularMdp,
    means: &[f64],
    policy: &DeterministicPolicy,
) -> Result<ValueTables> {
    check_policy(mdp, policy)?;
    let sz = mdp.sizes();
    let states = sz.states;
    let mut v = vec![0.0; (sz.horizon + 1) * states];
    let mut q = vec![0.0; sz.cells()];
    for h in (0..sz.horizon).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * states);
        let next = &tail[..states];
        for s in 0..states {
            for a in 0..sz.actions {
                let i = sz.cell(h, s, a);
                q[i] = means[i] + mdp.expect(h, s, a, next);
            }
            head[h * states + s] = q[sz.cell(h, s, policy.action(h, s))];
        }
    }
    Ok(ValueTables { sizes: sz, v, q })
}

/// Exact V^π and Q^π.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    family: &RewardFamily,
    policy: &DeterministicPolicy,
) -> Result<ValueTables> {
    evaluate_policy_from_means(mdp, &family.mean_table(mdp)?, policy)
}

/// Reusable scratch space for evaluating many policies against one model.
#[derive(Debug, Clone)]
pub struct PolicyEvaluator<'a> {
    mdp: &'a TabularMdp,
    means: Vec<f64>,
    buf: Vec<f64>,
}

impl<'a> PolicyEvaluator<'a> {
    pub fn new(mdp: &'a TabularMdp, family: &RewardFamily) -> Result<Self> {
        Self::from_means(mdp, family.mean_table(mdp)?)
    }

    pub fn from_means(mdp: &'a TabularMdp, means: Vec<f64>) -> Result<Self> {
        if means.len() != mdp.sizes().cells() {
            return Err(Error::Shape("mean table does not match MDP".into()));
        }
        Ok(Self {
            mdp,
            means,
            buf: vec![0.0; 2 * mdp.num_states()],
        })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// V^π_0(s_1), computing only the values along the policy.
    pub fn start_value(&mut self, policy: &DeterministicPolicy) -> f64 {
        let sz = self.mdp.sizes();
        let states = sz.states;
        let (mut next, mut cur) = self.buf.split_at_mut(states);
        next.fill(0.0);
        for h in (0..sz.horizon).rev() {
            for s in 0..states {
                let a = policy.action(h, s);
                cur[s] = self.means[sz.cell(h, s, a)] + self.mdp.expect(h, s, a, next);
            }
            std::mem::swap(&mut next, &mut cur);
        }
        next[self.mdp.start_state()]
    }
}

/// Value of the uniform mixture: the average of the components' start values.
pub fn evaluate_mixture(
    mdp: &TabularMdp,
    family: &RewardFamily,
    mix: &MixturePolicy,
) -> Result<f64> {
    check_policy(mdp, &mix.policies[0])?;
    let eval = PolicyEvaluator::new(mdp, family)?;
    let values: Vec<f64> = mix
        .policies
        .par_iter()
        .map_init(|| eval.clone(), |ev, p| ev.start_value(p))
        .collect();
    // summed in order so the result does not depend on the thread count
    Ok(values.iter().sum::<f64>() / mix.len() as f64)
}

/// Maximum probability of occupying a target (step, state), indexed by
/// earlier (step, state) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachTable {
    target_step: usize,
    target_state: usize,
    states: usize,
    values: Vec<f64>,
}

impl ReachTable {
    pub fn target(&self) -> (usize, usize) {
        (self.target_step, self.target_state)
    }

    /// δ_{h, h*}(s, s*) for `h <= h*`.
    pub fn get(&self, h: usize, s: usize) -> f64 {
        assert!(h <= self.target_step, "step {h} is after the target step");
        self.values[h * self.states + s]
    }
}

/// Backward recursion δ_{h,h*}(s, s*) = max_a Σ_{s'} P_h(s'|s,a) δ_{h+1,h*}(s', s*),
/// seeded with the indicator of s* at step h*.
pub fn reachability_to_target(
    mdp: &TabularMdp,
    target_step: usize,
    target_state: usize,
) -> Result<ReachTable> {
    let sz = mdp.sizes();
    check_index("step", target_step, sz.horizon)?;
    check_index("state", target_state, sz.states)?;
    let states = sz.states;
    let mut values = vec![0.0; (target_step + 1) * states];
    values[target_step * states + target_state] = 1.0;
    for h in (0..target_step).rev() {
        let (head, tail) = values.split_at_mut((h + 1) * states);
        let next = &tail[..states];
        for s in 0..states {
            let best = (0..sz.actions)
                .map(|a| mdp.expect(h, s, a, next))
                .fold(f64::NEG_INFINITY, f64::max);
            head[h * states + s] = best.clamp(0.0, 1.0);
        }
    }
    Ok(ReachTable {
        target_step,
        target_state,
        states,
        values,
    })
}

/// δ_h(s) for every (h, s), laid out (h, s)-major.
pub fn all_reachabilities(mdp: &TabularMdp) -> Vec<f64> {
    let sz = mdp.sizes();
    (0..sz.horizon * sz.states)
        .into_par_iter()
        .map(|i| {
            let (h, s) = (i / sz.states, i % sz.states);
            reachability_to_target(mdp, h, s)
                .expect("indices in range")
                .get(0, mdp.start_state())
        })
        .collect()
}

/// max_π V^π_0(s_1) by enumerating every deterministic time-dependent policy.
pub fn brute_force_optimal(mdp: &TabularMdp, family: &RewardFamily) -> Result<f64> {
    let sz = mdp.sizes();
    let slots = sz.horizon * sz.states;
    let count = (sz.actions as u128)
        .checked_pow(slots as u32)
        .unwrap_or(u128::MAX);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            policies: count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let means = family.mean_table(mdp)?;
    let mut digits = vec![0usize; slots];
    let mut best = f64::NEG_INFINITY;
    loop {
        let policy = DeterministicPolicy::from_actions(sz, digits.clone())?;
        let value = evaluate_policy_from_means(mdp, &means, &policy)?.start_value();
        best = best.max(value);
        // odometer increment
        let mut i = 0;
        loop {
            if i == slots {
                return Ok(best);
            }
            digits[i] += 1;
            if digits[i] < sz.actions {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Largest |Q_h(s,a) - (r̄ + P_h V_{h+1})| and |V_h(s) - max_a Q_h(s,a)|.
pub fn bellman_residual(mdp: &TabularMdp, means: &[f64], tables: &ValueTables) -> f64 {
    let sz = mdp.sizes();
    let mut worst: f64 = 0.0;
    for h in 0..sz.horizon {
        let next = &tables.v[(h + 1) * sz.states..(h + 2) * sz.states];
        for s in 0..sz.states {
            let mut best = f64::NEG_INFINITY;
            for a in 0..sz.actions {
                let i = sz.cell(h, s, a);
                let target = means[i] + mdp.expect(h, s, a, next);
                worst = worst.max((tables.q[i] - target).abs());
                best = best.max(tables.q[i]);
            }
            worst = worst.max((tables.v(h, s) - best).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{gen_chain, gen_random_dense, gen_uniform_transition, random_bernoulli_task};
    use approx::assert_abs_diff_eq;

    fn sizes(s: usize, a: usize, h: usize) -> Sizes {
        Sizes::new(s, a, h).unwrap()
    }

    #[test]
    fn single_state_sums_rewards() {
        let mdp = TabularMdp::from_raw(sizes(1, 1, 3), vec![1.0; 3]).unwrap();
        let fam = RewardFamily::deterministic(mdp.sizes(), vec![1.0; 3]).unwrap();
        let (vt, _) = optimal_values(&mdp, &fam).unwrap();
        assert_eq!(vt.start_value(), 3.0);
        assert_eq!(vt.v(3, 0), 0.0);
    }

    #[test]
    fn bandit_picks_best_arm() {
        let mdp = TabularMdp::from_raw(sizes(1, 2, 1), vec![1.0, 1.0]).unwrap();
        let fam = RewardFamily::bernoulli(mdp.sizes(), vec![0.2, 0.5]).unwrap();
        let (vt, pi) = optimal_values(&mdp, &fam).unwrap();
        assert_eq!(vt.start_value(), 0.5);
        assert_eq!(pi.action(0, 0), 1);
        assert_eq!(brute_force_optimal(&mdp, &fam).unwrap(), 0.5);
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let mdp = TabularMdp::from_raw(sizes(1, 3, 1), vec![1.0; 3]).unwrap();
        let fam = RewardFamily::deterministic(mdp.sizes(), vec![0.4, 0.4, 0.1]).unwrap();
        let (_, pi) = optimal_values(&mdp, &fam).unwrap();
        assert_eq!(pi.action(0, 0), 0);
    }

    #[test]
    fn greedy_policy_attains_optimum() {
        let mdp = gen_random_dense(4, 3, 4, 5).unwrap();
        let fam = random_bernoulli_task(mdp.sizes(), 9);
        let (vt, pi) = optimal_values(&mdp, &fam).unwrap();
        let vp = evaluate_policy(&mdp, &fam, &pi).unwrap();
        for h in 0..=4 {
            for s in 0..4 {
                assert_abs_diff_eq!(vp.v(h, s), vt.v(h, s), epsilon = 1e-12);
            }
        }
        let means = fam.mean_table(&mdp).unwrap();
        assert!(bellman_residual(&mdp, &means, &vt) < 1e-12);
    }

    #[test]
    fn single_action_any_policy_is_optimal() {
        let mdp = gen_random_dense(3, 1, 3, 2).unwrap();
        let fam = random_bernoulli_task(mdp.sizes(), 3);
        let (vt, _) = optimal_values(&mdp, &fam).unwrap();
        let pi = DeterministicPolicy::constant(mdp.sizes(), 0).unwrap();
        let vp = evaluate_policy(&mdp, &fam, &pi).unwrap();
        assert_abs_diff_eq!(vp.start_value(), vt.start_value(), epsilon = 1e-12);
        assert_abs_diff_eq!(brute_force_optimal(&mdp, &fam).unwrap(), vp.start_value(), epsilon = 1e-12);
    }

    #[test]
    fn values_bounded_by_remaining_steps() {
        let mdp = gen_random_dense(3, 2, 4, 8).unwrap();
        let fam = random_bernoulli_task(mdp.sizes(), 8);
        let (vt, _) = optimal_values(&mdp, &fam).unwrap();
        for h in 0..=4 {
            for s in 0..3 {
                assert!(vt.v(h, s) >= 0.0 && vt.v(h, s) <= (4 - h) as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn mixture_is_average_of_components() {
        let mdp = gen_random_dense(3, 3, 3, 1).unwrap();
        let fam = random_bernoulli_task(mdp.sizes(), 1);
        let (_, opt) = optimal_values(&mdp, &fam).unwrap();
        let other = DeterministicPolicy::constant(mdp.sizes(), 2).unwrap();
        let v_opt = evaluate_policy(&mdp, &fam, &opt).unwrap().start_value();
        let v_other = evaluate_policy(&mdp, &fam, &other).unwrap().start_value();

        let one = MixturePolicy::new(vec![opt.clone()]).unwrap();
        assert_abs_diff_eq!(evaluate_mixture(&mdp, &fam, &one).unwrap(), v_opt, epsilon = 1e-12);
        let dup = MixturePolicy::new(vec![opt.clone(), opt.clone()]).unwrap();
        assert_abs_diff_eq!(evaluate_mixture(&mdp, &fam, &dup).unwrap(), v_opt, epsilon = 1e-12);
        let mix = MixturePolicy::new(vec![opt, other]).unwrap();
        assert_abs_diff_eq!(
            evaluate_mixture(&mdp, &fam, &mix).unwrap(),
            0.5 * (v_opt + v_other),
            epsilon = 1e-12
        );
    }

    #[test]
    fn empty_mixture_rejected() {
        assert!(MixturePolicy::new(vec![]).is_err());
    }

    #[test]
    fn reach_base_case() {
        let mdp = gen_random_dense(3, 2, 3, 4).unwrap();
        let t = reachability_to_target(&mdp, 0, 0).unwrap();
        assert_eq!(t.get(0, 0), 1.0);
        assert_eq!(t.get(0, 1), 0.0);
        let all = all_reachabilities(&mdp);
        assert_eq!(all[0], 1.0);
    }

    #[test]
    fn uniform_reach_is_one_over_s() {
        let mdp = gen_uniform_transition(4, 2, 4).unwrap();
        let all = all_reachabilities(&mdp);
        for h in 1..4 {
            for s in 0..4 {
                assert_abs_diff_eq!(all[h * 4 + s], 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_chain_reach_is_binary() {
        let mdp = gen_chain(4, 5, 0.0).unwrap();
        let all = all_reachabilities(&mdp);
        for h in 0..5 {
            for s in 0..4 {
                let d = all[h * 4 + s];
                assert!(d == 0.0 || d == 1.0);
                // reachable within h moves of the left end
                assert_eq!(d == 1.0, s <= h);
            }
        }
    }

    #[test]
    fn brute_force_guard() {
        let mdp = gen_random_dense(5, 3, 5, 0).unwrap();
        let fam = random_bernoulli_task(mdp.sizes(), 0);
        assert!(matches!(brute_force_optimal(&mdp, &fam), Err(Error::TooLarge { .. })));
    }
}
