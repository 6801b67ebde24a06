//! Experiment configuration, read from a single TOML file.
//!
//! ```toml
//! seed = 0
//!
//! [env]
//! generator = "random-dense"
//! states = 5
//! actions = 3
//! horizon = 5
//! seed = 0
//!
//! [tasks]
//! count = 10
//! kind = "bernoulli"
//!
//! [algo]
//! episodes = 65536
//! failure_prob = 0.1
//! bonus_c = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ucbzero_core::envgen::{EnvSpec, TaskKind};
use ucbzero_core::{AlgoParams, RewardFamily, TabularMdp};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream.
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub env: EnvSpec,
    #[serde(default)]
    pub tasks: TaskConfig,
    pub algo: AlgoConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub bandit: Option<BanditConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKindName {
    #[default]
    Default,
    Bernoulli,
    Deterministic,
    Hard,
    Goal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub kind: TaskKindName,
    /// Gap of the hard family; required when `kind = "hard"`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Seed of the task draw; the root seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            count: 1,
            kind: TaskKindName::Default,
            epsilon: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub episodes: usize,
    #[serde(default = "default_failure_prob")]
    pub failure_prob: f64,
    #[serde(default = "default_bonus_c")]
    pub bonus_c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Gap-curve checkpoints; geometric {1, 2, 4, ..., K} when absent.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_delta_floor")]
    pub delta_floor: f64,
    /// Value-ratio targets as `[h, s, a, next]`.
    #[serde(default)]
    pub targets: Vec<[usize; 4]>,
    /// Also run the naive per-task baseline in `run` and `sweep`.
    #[serde(default)]
    pub naive: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            checkpoints: None,
            delta_floor: default_delta_floor(),
            targets: Vec::new(),
            naive: false,
        }
    }
}

/// Grids for `sweep`. Absent grids take the single value from the base
/// sections.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub tasks: Option<Vec<usize>>,
    #[serde(default)]
    pub episodes: Option<Vec<usize>>,
    #[serde(default)]
    pub bonus_c: Option<Vec<f64>>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditConfig {
    /// Episode budgets K of the two-arm construction.
    #[serde(default = "default_construction_episodes")]
    pub construction_episodes: Vec<u32>,
    /// Monte-Carlo points as `[t2, tasks]`.
    #[serde(default = "default_mc_points")]
    pub mc_points: Vec<[u64; 2]>,
    #[serde(default = "default_mc_trials")]
    pub mc_trials: u64,
    #[serde(default = "default_minimax_steps")]
    pub minimax_steps: usize,
    #[serde(default = "default_n_arms")]
    pub n_arms: usize,
    #[serde(default = "default_bandit_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_task_grid")]
    pub task_grid: Vec<usize>,
    #[serde(default = "default_hardness_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_bandit_bonus_c")]
    pub bonus_c: f64,
    /// δ and constant for t*.
    #[serde(default = "default_t_star_delta")]
    pub t_star_delta: f64,
    #[serde(default = "default_c_lb")]
    pub c_lb: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

fn one() -> usize {
    1
}
fn default_failure_prob() -> f64 {
    0.1
}
fn default_bonus_c() -> f64 {
    1.0
}
fn default_delta_floor() -> f64 {
    ucbzero_core::analysis::DEFAULT_DELTA_FLOOR
}
fn default_construction_episodes() -> Vec<u32> {
    (1..=20).collect()
}
fn default_mc_points() -> Vec<[u64; 2]> {
    vec![[0, 2], [1, 2], [3, 10]]
}
fn default_mc_trials() -> u64 {
    100_000
}
fn default_minimax_steps() -> usize {
    1000
}
fn default_n_arms() -> usize {
    4
}
fn default_bandit_epsilon() -> f64 {
    0.1
}
fn default_task_grid() -> Vec<usize> {
    vec![1, 8, 64]
}
fn default_hardness_seeds() -> Vec<u64> {
    (0..10).collect()
}
/// 128 · 2^(i/2) for i = 0..=24.
pub fn default_budgets() -> Vec<usize> {
    (0..=24)
        .map(|i| (128.0 * 2f64.powf(i as f64 / 2.0)).round() as usize)
        .collect()
}
fn default_trials() -> usize {
    200
}
fn default_bandit_bonus_c() -> f64 {
    0.5
}
fn default_t_star_delta() -> f64 {
    1e-3
}
fn default_c_lb() -> f64 {
    100.0
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    fn validate(&self) -> Result<()> {
        if self.tasks.count == 0 {
            return Err(CliError::Config("tasks.count must be at least 1".into()));
        }
        if self.tasks.kind == TaskKindName::Hard && self.tasks.epsilon.is_none() {
            return Err(CliError::Config("tasks.epsilon is required for kind = \"hard\"".into()));
        }
        if let Some(sweep) = &self.sweep {
            for (name, empty) in [
                ("sweep.tasks", sweep.tasks.as_ref().is_some_and(|v| v.is_empty())),
                ("sweep.episodes", sweep.episodes.as_ref().is_some_and(|v| v.is_empty())),
                ("sweep.bonus_c", sweep.bonus_c.as_ref().is_some_and(|v| v.is_empty())),
                ("sweep.seeds", sweep.seeds.as_ref().is_some_and(|v| v.is_empty())),
            ] {
                if empty {
                    return Err(CliError::Config(format!("{name} must not be empty")));
                }
            }
        }
        Ok(())
    }

    pub fn task_seed(&self) -> u64 {
        self.tasks.seed.unwrap_or(self.seed)
    }

    pub fn task_kind(&self) -> TaskKind {
        match self.tasks.kind {
            TaskKindName::Default => TaskKind::Default,
            TaskKindName::Bernoulli => TaskKind::Bernoulli,
            TaskKindName::Deterministic => TaskKind::Deterministic,
            TaskKindName::Goal => TaskKind::Goal,
            TaskKindName::Hard => TaskKind::Hard {
                epsilon: self.tasks.epsilon.unwrap_or_default(),
            },
        }
    }

    pub fn build_mdp(&self) -> Result<TabularMdp> {
        self.env.build().map_err(config_error)
    }

    /// The first `count` tasks of the configured draw.
    pub fn families(&self, mdp: &TabularMdp, count: usize) -> Result<Vec<RewardFamily>> {
        self.env
            .tasks(mdp, self.task_kind(), count, self.task_seed())
            .map_err(config_error)
    }

    pub fn params(&self, mdp: &TabularMdp) -> Result<AlgoParams> {
        self.params_for(mdp, self.algo.episodes, self.tasks.count, self.algo.bonus_c)
    }

    pub fn params_for(&self, mdp: &TabularMdp, episodes: usize, tasks: usize, bonus_c: f64) -> Result<AlgoParams> {
        AlgoParams::new(mdp.sizes(), episodes, tasks, self.algo.failure_prob, bonus_c).map_err(config_error)
    }
}

/// Parameter errors raised while building from a config are config errors.
fn config_error(e: ucbzero_core::Error) -> CliError {
    match e {
        ucbzero_core::Error::Parameter(msg) => CliError::Config(msg),
        other => CliError::Core(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3
[env]
generator = "random-dense"
states = 2
actions = 2
horizon = 2
[algo]
episodes = 10
"#;

    #[test]
    fn parses_minimal() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.algo.episodes, 10);
        assert_eq!(cfg.algo.bonus_c, 1.0);
        assert_eq!(cfg.tasks.count, 1);
        assert_eq!(cfg.task_seed(), 3);
        assert!(cfg.sweep.is_none());
        let mdp = cfg.build_mdp().unwrap();
        assert_eq!(mdp.num_states(), 2);
    }

    #[test]
    fn missing_episodes_is_named() {
        let text = BASE.replace("episodes = 10", "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("episodes"), "{err}");
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again.to_toml(), cfg.to_toml());
    }

    #[test]
    fn hard_needs_epsilon() {
        let text = format!("{BASE}\n[tasks]\nkind = \"hard\"\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn bandit_defaults() {
        let b = BanditConfig::default();
        assert_eq!(b.construction_episodes.len(), 20);
        assert_eq!(b.budgets[0], 128);
        assert_eq!(b.budgets[24], 524_288);
    }
}
