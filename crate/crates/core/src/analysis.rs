//! Turns runs into checkable quantities: mixture gap curves, coverage ratios,
//! scaled model errors, the value-ratio transition estimator and N-scaling
//! summaries.

use serde::Serialize;

use crate::baselines::EmpiricalModel;
use crate::dataset::{ExplorationDataset, RewardAugmentedDataset};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::reward::RewardFamily;
use crate::solver::{all_reachabilities, optimal_values_from_means, DeterministicPolicy, PolicyEvaluator};
use crate::ucbzero::{replay, run_task_agnostic, AlgoParams, RunOptions};

/// Default reachability floor for coverage summaries.
pub const DEFAULT_DELTA_FLOOR: f64 = 1e-3;

/// Running value of a growing uniform mixture, with the gap recorded at
/// chosen prefix lengths.
#[derive(Debug, Clone)]
pub struct GapTracker<'a> {
    evaluator: PolicyEvaluator<'a>,
    optimal_value: f64,
    checkpoints: Vec<usize>,
    next_checkpoint: usize,
    pushed: usize,
    value_sum: f64,
    curve: Vec<(usize, f64)>,
}

impl<'a> GapTracker<'a> {
    /// `checkpoints` are sorted and deduplicated; zero is dropped.
    pub fn new(mdp: &'a TabularMdp, family: &RewardFamily, mut checkpoints: Vec<usize>) -> Result<Self> {
        let evaluator = PolicyEvaluator::new(mdp, family)?;
        let (tables, _) = optimal_values_from_means(mdp, evaluator.means())?;
        checkpoints.sort_unstable();
        checkpoints.dedup();
        checkpoints.retain(|&k| k > 0);
        Ok(Self {
            evaluator,
            optimal_value: tables.start_value(),
            checkpoints,
            next_checkpoint: 0,
            pushed: 0,
            value_sum: 0.0,
            curve: Vec::new(),
        })
    }

    pub fn push(&mut self, policy: &DeterministicPolicy) {
        self.value_sum += self.evaluator.start_value(policy);
        self.pushed += 1;
        if self.checkpoints.get(self.next_checkpoint) == Some(&self.pushed) {
            self.curve.push((self.pushed, self.gap()));
            self.next_checkpoint += 1;
        }
    }

    pub fn optimal_value(&self) -> f64 {
        self.optimal_value
    }

    pub fn len(&self) -> usize {
        self.pushed
    }

    pub fn is_empty(&self) -> bool {
        self.pushed == 0
    }

    /// Value of the mixture over every policy pushed so far.
    pub fn mixture_value(&self) -> f64 {
        if self.pushed == 0 {
            return f64::NAN;
        }
        self.value_sum / self.pushed as f64
    }

    pub fn gap(&self) -> f64 {
        self.optimal_value - self.mixture_value()
    }

    pub fn curve(&self) -> &[(usize, f64)] {
        &self.curve
    }
}

/// {1, 2, 4, ...} up to and including `max`.
pub fn geometric_checkpoints(max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = 1;
    while k < max {
        out.push(k);
        k *= 2;
    }
    if max > 0 {
        out.push(max);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub k: usize,
    pub gap: f64,
}

/// Gap of the mixture over the first k policies at every checkpoint.
pub fn gap_curve(
    mdp: &TabularMdp,
    family: &RewardFamily,
    policies: &[DeterministicPolicy],
    checkpoints: &[usize],
) -> Result<Vec<GapPoint>> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("checkpoints must be strictly ascending".into()));
    }
    if let Some(&k) = checkpoints.iter().find(|&&k| k == 0 || k > policies.len()) {
        return Err(Error::Parameter(format!(
            "checkpoint {k} outside [1, {}]",
            policies.len()
        )));
    }
    let last = checkpoints.last().copied().unwrap_or(0);
    let mut tracker = GapTracker::new(mdp, family, checkpoints.to_vec())?;
    for p in &policies[..last] {
        tracker.push(p);
    }
    Ok(tracker
        .curve()
        .iter()
        .map(|&(k, gap)| GapPoint { k, gap })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCell {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub count: u64,
    pub reach: f64,
    /// N·H²SA / (K·δ²); absent when δ = 0.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub episodes: usize,
    pub delta_floor: f64,
    pub cells: Vec<CoverageCell>,
    /// Summaries over cells with δ_h(s) >= floor.
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub min_count: u64,
}

/// Coverage of the final visit counts against reachability.
pub fn coverage_report(counts: &[u64], episodes: usize, mdp: &TabularMdp, delta_floor: f64) -> Result<CoverageReport> {
    let sz = mdp.sizes();
    if counts.len() != sz.cells() {
        return Err(Error::Shape(format!(
            "{} counts for {} cells",
            counts.len(),
            sz.cells()
        )));
    }
    if episodes == 0 {
        return Err(Error::Parameter("coverage needs at least one episode".into()));
    }
    let reach = all_reachabilities(mdp);
    let scale = (sz.horizon * sz.horizon * sz.states * sz.actions) as f64 / episodes as f64;
    let mut cells = Vec::with_capacity(sz.cells());
    let mut ratios = Vec::new();
    let mut min_count = u64::MAX;
    for h in 0..sz.horizon {
        for s in 0..sz.states {
            let d = reach[h * sz.states + s];
            for a in 0..sz.actions {
                let count = counts[sz.cell(h, s, a)];
                let ratio = (d > 0.0).then(|| count as f64 * scale / (d * d));
                if d >= delta_floor {
                    ratios.push(ratio.expect("floor is positive"));
                    min_count = min_count.min(count);
                }
                cells.push(CoverageCell { h, s, a, count, reach: d, ratio });
            }
        }
    }
    if ratios.is_empty() {
        return Err(Error::Parameter(format!("no cell has reachability >= {delta_floor}")));
    }
    Ok(CoverageReport {
        episodes,
        delta_floor,
        cells,
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        median_ratio: median(&mut ratios),
        min_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelErrorCell {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub next: usize,
    pub p_hat: f64,
    pub p: f64,
    pub reach: f64,
    /// δ_h(s)·|P̂ - P|.
    pub scaled_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelErrorReport {
    pub episodes: usize,
    /// Cells with δ_h(s) = 0 are omitted.
    pub cells: Vec<ModelErrorCell>,
    pub max: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

/// Reachability-scaled transition error of an empirical model.
pub fn model_error_report(model: &EmpiricalModel, mdp: &TabularMdp, episodes: usize) -> Result<ModelErrorReport> {
    let sz = mdp.sizes();
    if model.sizes() != sz {
        return Err(Error::Shape("model does not match MDP".into()));
    }
    let reach = all_reachabilities(mdp);
    let mut cells = Vec::new();
    for h in 0..sz.horizon {
        for s in 0..sz.states {
            let d = reach[h * sz.states + s];
            if d <= 0.0 {
                continue;
            }
            for a in 0..sz.actions {
                for next in 0..sz.states {
                    let p_hat = model.p_hat(h, s, a, next);
                    let p = mdp.prob(h, s, a, next);
                    cells.push(ModelErrorCell {
                        h,
                        s,
                        a,
                        next,
                        p_hat,
                        p,
                        reach: d,
                        scaled_error: d * (p_hat - p).abs(),
                    });
                }
            }
        }
    }
    let mut errs: Vec<f64> = cells.iter().map(|c| c.scaled_error).collect();
    errs.sort_by(f64::total_cmp);
    Ok(ModelErrorReport {
        episodes,
        max: errs.last().copied().unwrap_or(0.0),
        p50: quantile_sorted(&errs, 0.5),
        p90: quantile_sorted(&errs, 0.9),
        p99: quantile_sorted(&errs, 0.99),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TransitionTarget {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub next: usize,
}

/// Estimates P_{h*}(s'* | s*, a*) as the ratio of the average optimistic start
/// values obtained by replaying the dataset with the transition indicator and
/// the visit indicator of (h*, s*) as rewards. Clamped to [0, 1]. A target
/// whose (h*, s*) never occurs in the dataset is degenerate.
pub fn value_ratio_transition_estimate(
    dataset: &ExplorationDataset,
    params: &AlgoParams,
    target: TransitionTarget,
) -> Result<f64> {
    let sizes = dataset.sizes();
    let exact = RewardFamily::transition_indicator(sizes, target.h, target.s, target.a, target.next)?;
    let visit = RewardFamily::visit_indicator(sizes, target.h, target.s)?;
    let h_len = sizes.horizon;
    let visited = dataset
        .steps()
        .iter()
        .enumerate()
        .any(|(i, t)| i % h_len == target.h && t.state == target.s);
    if !visited {
        return Err(Error::DegenerateTarget(format!(
            "step {} state {} never occurs in the dataset",
            target.h, target.s
        )));
    }
    let v_exact = average_start_value(dataset, &exact, params)?;
    let v_visit = average_start_value(dataset, &visit, params)?;
    if v_visit <= 0.0 {
        return Err(Error::DegenerateTarget(format!(
            "visit indicator of step {} state {} has zero average value",
            target.h, target.s
        )));
    }
    Ok((v_exact / v_visit).clamp(0.0, 1.0))
}

/// Ṽ = (1/K) Σ_k V^k_1(s_1) for an indicator reward replay.
fn average_start_value(dataset: &ExplorationDataset, family: &RewardFamily, params: &AlgoParams) -> Result<f64> {
    let h_len = dataset.sizes().horizon;
    // indicator kernels are deterministic given the transition
    let rewards = dataset
        .steps()
        .iter()
        .enumerate()
        .map(|(i, t)| match family.kind() {
            crate::reward::RewardKind::Indicator(spec) => {
                if spec.matches(i % h_len, t.state, t.action, t.next) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => unreachable!("indicator families only"),
        })
        .collect();
    let aug = RewardAugmentedDataset::new(dataset.clone(), rewards)?;
    let mut sum = 0.0;
    replay(&aug, params, dataset.sizes(), |_, _, v| sum += v)?;
    Ok(sum / dataset.num_episodes() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NScalingRow {
    pub tasks: usize,
    pub seeds: usize,
    pub median_max_gap: f64,
    pub min_max_gap: f64,
    pub max_max_gap: f64,
    /// Median over seeds of the first checkpoint where every task's prefix
    /// mixture gap is at most the target; `None` if more than half the
    /// seeds never reach it.
    pub median_episodes_to_target: Option<usize>,
}

/// Runs the full pipeline over a grid of task counts and seeds.
///
/// `tasks_for(n, seed)` must return `n` reward families.
pub fn n_scaling_summary<F>(
    mdp: &TabularMdp,
    tasks_for: F,
    base: &AlgoParams,
    task_grid: &[usize],
    seeds: &[u64],
    target_gap: f64,
) -> Result<Vec<NScalingRow>>
where
    F: Fn(usize, u64) -> Result<Vec<RewardFamily>>,
{
    if task_grid.is_empty() || seeds.is_empty() {
        return Err(Error::Parameter("task grid and seeds must be non-empty".into()));
    }
    let options = RunOptions {
        checkpoints: geometric_checkpoints(base.episodes),
        keep_mixtures: false,
    };
    let mut rows = Vec::with_capacity(task_grid.len());
    for &n in task_grid {
        let params = base.with_tasks(n);
        let mut max_gaps = Vec::with_capacity(seeds.len());
        let mut reach_k = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let families = tasks_for(n, seed)?;
            let run = run_task_agnostic(mdp, &families, &params, seed, &options)?;
            max_gaps.push(run.max_gap());
            reach_k.push(episodes_to_target(&run.tasks, target_gap));
        }
        let mut sorted = max_gaps.clone();
        reach_k.sort_by_key(|k| k.unwrap_or(usize::MAX));
        let mid = reach_k[(reach_k.len() - 1) / 2];
        rows.push(NScalingRow {
            tasks: n,
            seeds: seeds.len(),
            median_max_gap: median(&mut sorted),
            min_max_gap: max_gaps.iter().copied().fold(f64::INFINITY, f64::min),
            max_max_gap: max_gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            median_episodes_to_target: mid,
        });
    }
    Ok(rows)
}

fn episodes_to_target(tasks: &[crate::ucbzero::TaskOutcome], target: f64) -> Option<usize> {
    let points = tasks.first()?.gap_curve.len();
    (0..points).find_map(|i| {
        let worst = tasks
            .iter()
            .map(|t| t.gap_curve[i].1)
            .fold(f64::NEG_INFINITY, f64::max);
        (worst <= target).then(|| tasks[0].gap_curve[i].0)
    })
}

/// Median (mean of the middle pair for even lengths). Sorts in place.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Least-squares slope of ln(y) against ln(x). Points with non-positive
/// coordinates are skipped.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
