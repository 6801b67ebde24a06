//! One function per subcommand. Each reads the config, computes, and writes
//! CSVs plus a manifest into the output directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ucbzero_core::analysis::{
    coverage_report, geometric_checkpoints, model_error_report, value_ratio_transition_estimate, GapTracker,
    TransitionTarget,
};
use ucbzero_core::bandit_lb::{
    collision_probability_analytic, collision_probability_mc, empirical_hardness_sweep, hypothesis_family,
    median_budget_to_success, minimax_gap, minimax_grid, t_star, HardnessSweep, TwoArmConstruction,
};
use ucbzero_core::baselines::{build_empirical_model, naive_multitask};
use ucbzero_core::dataset::DatasetFile;
use ucbzero_core::ucbzero::{explore, instantiate_rewards, replay, run_task_agnostic, RunOptions};
use ucbzero_core::{AlgoParams, ExplorationDataset, RngStream, TabularMdp};

use crate::config::{BanditConfig, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::output::{csv_bytes, Output};

#[derive(Serialize)]
struct CountRow {
    h: usize,
    s: usize,
    a: usize,
    count: u64,
}

#[derive(Serialize)]
struct PseudoValueRow {
    k: usize,
    value: f64,
}

#[derive(Serialize)]
struct GapRow {
    task: usize,
    k: usize,
    gap: f64,
}

#[derive(Serialize)]
struct TaskRow {
    task: usize,
    optimal_value: f64,
    mixture_value: f64,
    gap: f64,
}

#[derive(Serialize)]
struct NaiveRow {
    task: usize,
    episodes: usize,
    optimal_value: f64,
    mixture_value: f64,
    gap: f64,
}

#[derive(Serialize)]
struct PolicyRow {
    k: usize,
    /// Actions of π_k, (h, s)-major, space separated.
    actions: String,
}

fn count_rows(mdp: &TabularMdp, counts: &[u64]) -> Vec<CountRow> {
    let sz = mdp.sizes();
    let mut rows = Vec::with_capacity(sz.cells());
    for h in 0..sz.horizon {
        for s in 0..sz.states {
            for a in 0..sz.actions {
                rows.push(CountRow {
                    h,
                    s,
                    a,
                    count: counts[sz.cell(h, s, a)],
                });
            }
        }
    }
    rows
}

fn checkpoints(cfg: &ExperimentConfig, episodes: usize) -> Vec<usize> {
    cfg.analysis
        .checkpoints
        .clone()
        .unwrap_or_else(|| geometric_checkpoints(episodes))
}

fn dataset_meta(cfg: &ExperimentConfig, params: &AlgoParams) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("seed".to_string(), cfg.seed.to_string()),
        ("env".to_string(), cfg.env.name().to_string()),
        ("env_seed".to_string(), cfg.env.seed.to_string()),
        ("tasks".to_string(), params.tasks.to_string()),
        ("failure_prob".to_string(), params.failure_prob.to_string()),
        ("bonus_c".to_string(), params.bonus_c.to_string()),
    ])
}

/// Reads a dataset and checks it against the configured environment and K.
pub fn load_dataset(path: &Path, mdp: &TabularMdp, episodes: usize) -> Result<ExplorationDataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let DatasetFile { dataset, .. } = ExplorationDataset::read_csv(BufReader::new(file))?;
    if dataset.sizes() != mdp.sizes() {
        return Err(CliError::Shape(format!(
            "dataset has sizes {:?} but the config builds {:?}",
            dataset.sizes(),
            mdp.sizes()
        )));
    }
    if dataset.num_episodes() != episodes {
        return Err(CliError::Shape(format!(
            "dataset has {} episodes but algo.episodes = {episodes}",
            dataset.num_episodes()
        )));
    }
    Ok(dataset)
}

pub fn cmd_explore(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let mdp = cfg.build_mdp()?;
    let params = cfg.params(&mdp)?;
    let ex = explore(&mdp, &params, &mut RngStream::new(cfg.seed, "explore"))?;
    let mut out = Output::create(out_dir)?;
    let mut data = Vec::new();
    ex.dataset.write_csv(&mut data, &dataset_meta(cfg, &params))?;
    out.write_bytes("dataset.csv", &data)?;
    out.write_bytes("mdp.txt", mdp.to_text().as_bytes())?;
    out.write_csv("counts.csv", &count_rows(&mdp, ex.state.counts()))?;
    let trace: Vec<PseudoValueRow> = ex
        .start_values
        .iter()
        .enumerate()
        .map(|(k, &value)| PseudoValueRow { k: k + 1, value })
        .collect();
    out.write_csv("pseudo_values.csv", &trace)?;
    out.finish("explore", cfg, BTreeMap::new())
}

pub fn cmd_optimize(cfg: &ExperimentConfig, out_dir: &Path, dataset_path: &Path, task: usize) -> Result<()> {
    let mdp = cfg.build_mdp()?;
    let params = cfg.params(&mdp)?;
    let dataset = load_dataset(dataset_path, &mdp, params.episodes)?;
    if task >= cfg.tasks.count {
        return Err(CliError::Config(format!(
            "task {task} out of range for tasks.count = {}",
            cfg.tasks.count
        )));
    }
    let families = cfg.families(&mdp, cfg.tasks.count)?;
    let family = &families[task];
    let mut rng = RngStream::new(cfg.seed, format!("reward:task-{task}"));
    let aug = instantiate_rewards(&dataset, family, &mut rng)?;
    let mut tracker = GapTracker::new(&mdp, family, checkpoints(cfg, params.episodes))?;
    let mut policies = Vec::with_capacity(params.episodes);
    replay(&aug, &params, mdp.sizes(), |k, pi, _| {
        tracker.push(pi);
        let actions: Vec<String> = pi.actions().map(|a| a.to_string()).collect();
        policies.push(PolicyRow {
            k: k + 1,
            actions: actions.join(" "),
        });
    })?;
    let mut out = Output::create(out_dir)?;
    out.write_csv("policy.csv", &policies)?;
    let curve: Vec<GapRow> = tracker
        .curve()
        .iter()
        .map(|&(k, gap)| GapRow { task, k, gap })
        .collect();
    out.write_csv("gap_curve.csv", &curve)?;
    out.write_csv(
        "summary.csv",
        &[TaskRow {
            task,
            optimal_value: tracker.optimal_value(),
            mixture_value: tracker.mixture_value(),
            gap: tracker.gap(),
        }],
    )?;
    let extra = BTreeMap::from([
        ("dataset".to_string(), dataset_path.display().to_string()),
        ("task".to_string(), task.to_string()),
    ]);
    out.finish("optimize", cfg, extra)
}

pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let mdp = cfg.build_mdp()?;
    let params = cfg.params(&mdp)?;
    let families = cfg.families(&mdp, cfg.tasks.count)?;
    let options = RunOptions {
        checkpoints: checkpoints(cfg, params.episodes),
        keep_mixtures: false,
    };
    let run = run_task_agnostic(&mdp, &families, &params, cfg.seed, &options)?;
    let mut out = Output::create(out_dir)?;
    let tasks: Vec<TaskRow> = run
        .tasks
        .iter()
        .enumerate()
        .map(|(task, t)| TaskRow {
            task,
            optimal_value: t.optimal_value,
            mixture_value: t.mixture_value,
            gap: t.gap,
        })
        .collect();
    out.write_csv("tasks.csv", &tasks)?;
    let curves: Vec<GapRow> = run
        .tasks
        .iter()
        .enumerate()
        .flat_map(|(task, t)| t.gap_curve.iter().map(move |&(k, gap)| GapRow { task, k, gap }))
        .collect();
    out.write_csv("gap_curves.csv", &curves)?;
    out.write_csv("counts.csv", &count_rows(&mdp, run.exploration.state.counts()))?;
    if cfg.analysis.naive {
        let naive = naive_multitask(
            &mdp,
            &families,
            params.episodes,
            params.failure_prob,
            params.bonus_c,
            cfg.seed,
        )?;
        let rows: Vec<NaiveRow> = naive
            .iter()
            .enumerate()
            .map(|(task, t)| NaiveRow {
                task,
                episodes: t.episodes,
                optimal_value: t.optimal_value,
                mixture_value: t.mixture_value,
                gap: t.gap,
            })
            .collect();
        out.write_csv("naive.csv", &rows)?;
    }
    out.finish("run", cfg, BTreeMap::new())
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tasks: usize,
    pub episodes: usize,
    pub bonus_c: f64,
    pub seed: u64,
    pub max_gap: f64,
    pub mean_gap: f64,
    /// Max-over-task gap of the naive baseline; empty unless enabled.
    pub naive_max_gap: Option<f64>,
}

fn sweep_row(cfg: &ExperimentConfig, mdp: &TabularMdp, tasks: usize, episodes: usize, bonus_c: f64, seed: u64) -> Result<SweepRow> {
    let params = cfg.params_for(mdp, episodes, tasks, bonus_c)?;
    let task_seed = cfg.tasks.seed.unwrap_or(seed);
    let families = cfg.env.tasks(mdp, cfg.task_kind(), tasks, task_seed)?;
    let run = run_task_agnostic(mdp, &families, &params, seed, &RunOptions::default())?;
    let naive_max_gap = if cfg.analysis.naive {
        let naive = naive_multitask(mdp, &families, episodes, params.failure_prob, bonus_c, seed)?;
        Some(naive.iter().map(|t| t.gap).fold(f64::NEG_INFINITY, f64::max))
    } else {
        None
    };
    Ok(SweepRow {
        tasks,
        episodes,
        bonus_c,
        seed,
        max_gap: run.max_gap(),
        mean_gap: run.tasks.iter().map(|t| t.gap).sum::<f64>() / tasks as f64,
        naive_max_gap,
    })
}

/// Runs every grid point not already present (with `resume`) and writes
/// `sweep.csv` in grid order. Each point is stored under `rows/` as soon as
/// it finishes.
pub fn cmd_sweep(cfg: &ExperimentConfig, out_dir: &Path, workers: Option<usize>, resume: bool) -> Result<()> {
    use rayon::prelude::*;

    let sweep = cfg.sweep.clone().unwrap_or_default();
    let task_grid = sweep.tasks.unwrap_or_else(|| vec![cfg.tasks.count]);
    let episode_grid = sweep.episodes.unwrap_or_else(|| vec![cfg.algo.episodes]);
    let c_grid = sweep.bonus_c.unwrap_or_else(|| vec![cfg.algo.bonus_c]);
    let seed_grid = sweep.seeds.unwrap_or_else(|| vec![cfg.seed]);
    let mut points = Vec::new();
    for &n in &task_grid {
        for &k in &episode_grid {
            for &c in &c_grid {
                for &s in &seed_grid {
                    points.push((n, k, c, s));
                }
            }
        }
    }
    let mdp = cfg.build_mdp()?;
    let out = Output::create(out_dir)?;
    let rows_dir = out.path("rows");
    std::fs::create_dir_all(&rows_dir).map_err(|e| CliError::io(&rows_dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .map(|&(n, k, c, s)| {
                let path = rows_dir.join(format!("n{n}_k{k}_c{c}_s{s}.csv"));
                if resume && path.exists() {
                    let mut reader = csv::Reader::from_path(&path)?;
                    if let Some(row) = reader.deserialize::<SweepRow>().next() {
                        return Ok(row?);
                    }
                }
                let row = sweep_row(cfg, &mdp, n, k, c, s)?;
                // rename is atomic, so an interrupted write never looks finished
                let tmp = path.with_extension("tmp");
                std::fs::write(&tmp, csv_bytes(std::slice::from_ref(&row))?).map_err(|e| CliError::io(&tmp, e))?;
                std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = out;
    out.write_csv("sweep.csv", &rows)?;
    let extra = BTreeMap::from([("points".to_string(), points.len().to_string())]);
    out.finish("sweep", cfg, extra)
}

#[derive(Serialize)]
struct CoverageRow {
    h: usize,
    s: usize,
    a: usize,
    count: u64,
    reach: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct CoverageSummaryRow {
    episodes: usize,
    delta_floor: f64,
    cells: usize,
    min_ratio: f64,
    median_ratio: f64,
    min_count: u64,
}

fn dataset_or_explore(cfg: &ExperimentConfig, mdp: &TabularMdp, dataset: Option<&Path>) -> Result<ExplorationDataset> {
    let params = cfg.params(mdp)?;
    match dataset {
        Some(path) => load_dataset(path, mdp, params.episodes),
        None => Ok(explore(mdp, &params, &mut RngStream::new(cfg.seed, "explore"))?.dataset),
    }
}

pub fn cmd_coverage(cfg: &ExperimentConfig, out_dir: &Path, dataset: Option<&Path>) -> Result<()> {
    let mdp = cfg.build_mdp()?;
    let data = dataset_or_explore(cfg, &mdp, dataset)?;
    let report = coverage_report(&data.visit_counts(), data.num_episodes(), &mdp, cfg.analysis.delta_floor)?;
    // cells under the floor are left out rather than written without a ratio
    let rows: Vec<CoverageRow> = report
        .cells
        .iter()
        .filter(|c| c.reach >= report.delta_floor)
        .map(|c| CoverageRow {
            h: c.h,
            s: c.s,
            a: c.a,
            count: c.count,
            reach: c.reach,
            ratio: c.ratio.expect("reachable cell has a ratio"),
        })
        .collect();
    let mut out = Output::create(out_dir)?;
    out.write_csv(
        "coverage_summary.csv",
        &[CoverageSummaryRow {
            episodes: report.episodes,
            delta_floor: report.delta_floor,
            cells: rows.len(),
            min_ratio: report.min_ratio,
            median_ratio: report.median_ratio,
            min_count: report.min_count,
        }],
    )?;
    out.write_csv("coverage.csv", &rows)?;
    out.finish("coverage", cfg, BTreeMap::new())
}

#[derive(Serialize)]
struct ModelErrorSummaryRow {
    episodes: usize,
    cells: usize,
    max: f64,
    p50: f64,
    p90: f64,
    p99: f64,
}

#[derive(Serialize)]
struct ValueRatioRow {
    h: usize,
    s: usize,
    a: usize,
    next: usize,
    /// Empty for degenerate targets.
    estimate: Option<f64>,
    count_estimate: f64,
    p: f64,
    status: &'static str,
}

pub fn cmd_model_error(cfg: &ExperimentConfig, out_dir: &Path, dataset: Option<&Path>) -> Result<()> {
    let mdp = cfg.build_mdp()?;
    let params = cfg.params(&mdp)?;
    let data = dataset_or_explore(cfg, &mdp, dataset)?;
    let model = build_empirical_model(&data, None)?;
    let report = model_error_report(&model, &mdp, data.num_episodes())?;
    let mut out = Output::create(out_dir)?;
    out.write_csv("model_error.csv", &report.cells)?;
    out.write_csv(
        "model_error_summary.csv",
        &[ModelErrorSummaryRow {
            episodes: report.episodes,
            cells: report.cells.len(),
            max: report.max,
            p50: report.p50,
            p90: report.p90,
            p99: report.p99,
        }],
    )?;
    if !cfg.analysis.targets.is_empty() {
        let sz = mdp.sizes();
        let mut rows = Vec::new();
        for &[h, s, a, next] in &cfg.analysis.targets {
            if h >= sz.horizon || s >= sz.states || a >= sz.actions || next >= sz.states {
                return Err(CliError::Config(format!("target [{h}, {s}, {a}, {next}] is out of range")));
            }
            let target = TransitionTarget { h, s, a, next };
            let (estimate, status) = match value_ratio_transition_estimate(&data, &params, target) {
                Ok(v) => (Some(v), "ok"),
                Err(ucbzero_core::Error::DegenerateTarget(_)) => (None, "degenerate"),
                Err(e) => return Err(e.into()),
            };
            rows.push(ValueRatioRow {
                h,
                s,
                a,
                next,
                estimate,
                count_estimate: model.p_hat(h, s, a, next),
                p: mdp.prob(h, s, a, next),
                status,
            });
        }
        out.write_csv("value_ratio.csv", &rows)?;
    }
    out.finish("model-error", cfg, BTreeMap::new())
}

#[derive(Serialize)]
struct ConstructionRow {
    episodes: u32,
    tasks: u64,
    collision_analytic: f64,
}

#[derive(Serialize)]
struct CollisionMcRow {
    t2: u64,
    tasks: u64,
    trials: u64,
    analytic: f64,
    estimate: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct MinimaxRow {
    x: f64,
    gap_q: f64,
    gap_p: f64,
    max: f64,
}

#[derive(Serialize)]
struct HypothesisRow {
    hypothesis: usize,
    arm: usize,
    mean: f64,
}

#[derive(Serialize)]
struct TStarRow {
    tasks: usize,
    epsilon: f64,
    delta: f64,
    c_lb: f64,
    t_star: f64,
}

#[derive(Serialize)]
struct HardnessSummaryRow {
    tasks: usize,
    seeds: usize,
    /// Median budget reaching 0.9 success; empty when not reached.
    median_budget: Option<f64>,
}

pub fn cmd_bandit_lb(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let b: BanditConfig = cfg.bandit.clone().unwrap_or_default();
    let mut out = Output::create(out_dir)?;

    let construction = b
        .construction_episodes
        .iter()
        .map(|&k| {
            let c = TwoArmConstruction::new(k)?;
            Ok(ConstructionRow {
                episodes: k,
                tasks: c.tasks,
                collision_analytic: c.collision_probability()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.write_csv("construction.csv", &construction)?;

    let mut mc = Vec::with_capacity(b.mc_points.len());
    for &[t2, tasks] in &b.mc_points {
        let t2_bits = u32::try_from(t2).map_err(|_| CliError::Config(format!("mc t2 {t2} too large")))?;
        let mut rng = RngStream::new(cfg.seed, format!("mc:t2-{t2}:n-{tasks}"));
        let est = collision_probability_mc(t2_bits, tasks, b.mc_trials, &mut rng)?;
        mc.push(CollisionMcRow {
            t2,
            tasks,
            trials: est.trials,
            analytic: collision_probability_analytic(t2_bits, tasks)?,
            estimate: est.estimate,
            std_error: est.std_error,
        });
    }
    out.write_csv("collision_mc.csv", &mc)?;

    let minimax = (0..=b.minimax_steps)
        .map(|i| {
            let g = minimax_gap(i as f64 / b.minimax_steps.max(1) as f64)?;
            Ok(MinimaxRow {
                x: g.x,
                gap_q: g.gap_q,
                gap_p: g.gap_p,
                max: g.max,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.write_csv("minimax.csv", &minimax)?;
    let best = minimax_grid(b.minimax_steps)?;
    out.write_csv(
        "minimax_min.csv",
        &[MinimaxRow {
            x: best.x,
            gap_q: best.gap_q,
            gap_p: best.gap_p,
            max: best.max,
        }],
    )?;

    let hyps = hypothesis_family(b.n_arms, b.epsilon)?;
    let hyp_rows: Vec<HypothesisRow> = hyps
        .iter()
        .enumerate()
        .flat_map(|(hypothesis, means)| {
            means.iter().enumerate().map(move |(arm, &mean)| HypothesisRow { hypothesis, arm, mean })
        })
        .collect();
    out.write_csv("hypotheses.csv", &hyp_rows)?;

    let tstar = b
        .task_grid
        .iter()
        .map(|&n| {
            Ok(TStarRow {
                tasks: n,
                epsilon: b.epsilon,
                delta: b.t_star_delta,
                c_lb: b.c_lb,
                t_star: t_star(b.epsilon, b.t_star_delta, n as u64, b.c_lb)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.write_csv("t_star.csv", &tstar)?;

    let sweep = HardnessSweep {
        n_arms: b.n_arms,
        epsilon: b.epsilon,
        task_grid: b.task_grid.clone(),
        seeds: b.seeds.clone(),
        budgets: b.budgets.clone(),
        trials: b.trials,
        bonus_c: b.bonus_c,
    };
    let rows = empirical_hardness_sweep(&sweep)?;
    out.write_csv("hardness.csv", &rows)?;
    let summary: Vec<HardnessSummaryRow> = b
        .task_grid
        .iter()
        .map(|&n| HardnessSummaryRow {
            tasks: n,
            seeds: b.seeds.len(),
            median_budget: median_budget_to_success(&rows, n, &b.seeds, 0.9),
        })
        .collect();
    out.write_csv("hardness_summary.csv", &summary)?;
    out.finish("bandit-lb", cfg, BTreeMap::new())
}
