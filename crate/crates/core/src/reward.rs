//! Stochastic reward kernels r_h(· | s, a, s') with support in [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::mdp::{Sizes, TabularMdp};
use crate::rng::RngStream;

/// Matches a (step, state[, action][, next state]) pattern. `None` is a
/// wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub step: usize,
    pub state: usize,
    pub action: Option<usize>,
    pub next: Option<usize>,
}

impl IndicatorSpec {
    #[inline]
    pub fn matches(&self, h: usize, s: usize, a: usize, next: usize) -> bool {
        h == self.step
            && s == self.state
            && self.action.is_none_or(|x| x == a)
            && self.next.is_none_or(|x| x == next)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RewardKind {
    /// The reward is the table entry itself.
    Deterministic(Vec<f64>),
    /// Reward 1 with probability given by the table entry, else 0.
    Bernoulli(Vec<f64>),
    /// Reward 1 exactly when the transition matches the pattern.
    Indicator(IndicatorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFamily {
    sizes: Sizes,
    kind: RewardKind,
}

impl RewardFamily {
    pub fn deterministic(sizes: Sizes, means: Vec<f64>) -> Result<Self> {
        check_means(sizes, &means)?;
        Ok(Self {
            sizes,
            kind: RewardKind::Deterministic(means),
        })
    }

    pub fn bernoulli(sizes: Sizes, means: Vec<f64>) -> Result<Self> {
        check_means(sizes, &means)?;
        Ok(Self {
            sizes,
            kind: RewardKind::Bernoulli(means),
        })
    }

    pub fn zero(sizes: Sizes) -> Self {
        Self {
            sizes,
            kind: RewardKind::Deterministic(vec![0.0; sizes.cells()]),
        }
    }

    pub fn indicator(sizes: Sizes, spec: IndicatorSpec) -> Result<Self> {
        check_index("step", spec.step, sizes.horizon)?;
        check_index("state", spec.state, sizes.states)?;
        if let Some(a) = spec.action {
            check_index("action", a, sizes.actions)?;
        }
        if let Some(n) = spec.next {
            check_index("state", n, sizes.states)?;
        }
        Ok(Self {
            sizes,
            kind: RewardKind::Indicator(spec),
        })
    }

    /// Reward 1 on the exact transition (h, s, a) -> s'.
    pub fn transition_indicator(
        sizes: Sizes,
        step: usize,
        state: usize,
        action: usize,
        next: usize,
    ) -> Result<Self> {
        Self::indicator(
            sizes,
            IndicatorSpec {
                step,
                state,
                action: Some(action),
                next: Some(next),
            },
        )
    }

    /// Reward 1 whenever state `state` is occupied at step `step`.
    pub fn visit_indicator(sizes: Sizes, step: usize, state: usize) -> Result<Self> {
        Self::indicator(
            sizes,
            IndicatorSpec {
                step,
                state,
                action: None,
                next: None,
            },
        )
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    pub fn kind(&self) -> &RewardKind {
        &self.kind
    }

    /// Samples a reward for the transition (h, s, a) -> s'.
    pub fn sample_reward(
        &self,
        h: usize,
        s: usize,
        a: usize,
        next: usize,
        rng: &mut RngStream,
    ) -> Result<f64> {
        self.sizes.check(h, s, a)?;
        check_index("state", next, self.sizes.states)?;
        Ok(self.draw(h, s, a, next, rng))
    }

    /// Unchecked sampler. Only the Bernoulli kind consumes a draw from `rng`.
    #[inline]
    pub fn draw(&self, h: usize, s: usize, a: usize, next: usize, rng: &mut RngStream) -> f64 {
        match &self.kind {
            RewardKind::Deterministic(means) => means[self.sizes.cell(h, s, a)],
            RewardKind::Bernoulli(means) => {
                if rng.bernoulli(means[self.sizes.cell(h, s, a)]) {
                    1.0
                } else {
                    0.0
                }
            }
            RewardKind::Indicator(spec) => {
                if spec.matches(h, s, a, next) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// E[r_h(s, a)], marginalising over s' for indicator kernels.
    pub fn mean_reward(&self, mdp: &TabularMdp, h: usize, s: usize, a: usize) -> Result<f64> {
        self.check_sizes(mdp)?;
        self.sizes.check(h, s, a)?;
        Ok(self.mean_unchecked(mdp, h, s, a))
    }

    fn mean_unchecked(&self, mdp: &TabularMdp, h: usize, s: usize, a: usize) -> f64 {
        match &self.kind {
            RewardKind::Deterministic(means) | RewardKind::Bernoulli(means) => {
                means[self.sizes.cell(h, s, a)]
            }
            RewardKind::Indicator(spec) => {
                if h != spec.step || s != spec.state || spec.action.is_some_and(|x| x != a) {
                    return 0.0;
                }
                match spec.next {
                    Some(n) => mdp.prob(h, s, a, n),
                    None => 1.0,
                }
            }
        }
    }

    /// Mean rewards for every (h, s, a), laid out like [`Sizes::cell`].
    pub fn mean_table(&self, mdp: &TabularMdp) -> Result<Vec<f64>> {
        self.check_sizes(mdp)?;
        let sz = self.sizes;
        let mut out = Vec::with_capacity(sz.cells());
        for h in 0..sz.horizon {
            for s in 0..sz.states {
                for a in 0..sz.actions {
                    out.push(self.mean_unchecked(mdp, h, s, a));
                }
            }
        }
        Ok(out)
    }

    fn check_sizes(&self, mdp: &TabularMdp) -> Result<()> {
        if self.sizes != mdp.sizes() {
            return Err(Error::Shape(format!(
                "reward family sized {:?} used with MDP sized {:?}",
                self.sizes,
                mdp.sizes()
            )));
        }
        Ok(())
    }
}

fn check_means(sizes: Sizes, means: &[f64]) -> Result<()> {
    if means.len() != sizes.cells() {
        return Err(Error::Shape(format!(
            "reward table has {} entries, expected {}",
            means.len(),
            sizes.cells()
        )));
    }
    if let Some(bad) = means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(Error::Parameter(format!("reward mean {bad} outside [0, 1]")));
    }
    Ok(())
}
