//! Task-agnostic exploration for tabular episodic MDPs.
//!
//! The crate is organised around one pipeline: a reward-free exploration
//! phase ([`ucbzero::explore`]) collects a dataset, and a per-task
//! policy-optimisation phase ([`ucbzero::policy_optimize`]) turns it into a
//! mixture policy once rewards are instantiated. Around it sit exact solvers
//! for ground truth ([`solver`]), baselines ([`baselines`]), environment
//! generators ([`envgen`]), reports ([`analysis`]) and the lower-bound
//! constructions ([`bandit_lb`]).

pub mod analysis;
pub mod bandit_lb;
pub mod baselines;
pub mod dataset;
pub mod envgen;
pub mod error;
pub mod mdp;
pub mod reward;
pub mod rng;
pub mod solver;
pub mod ucbzero;

pub use dataset::{ExplorationDataset, RewardAugmentedDataset, Transition};
pub use error::{Error, Result};
pub use mdp::{Sizes, TabularMdp};
pub use reward::{IndicatorSpec, RewardFamily};
pub use rng::RngStream;
pub use solver::{DeterministicPolicy, MixturePolicy, ValueTables};
pub use ucbzero::{AlgoParams, LearnerState};
