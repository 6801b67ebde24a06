use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ucbzero_cli::{commands, resolve_output_dir, CliError, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "ucbzero", version, about = "Task-agnostic exploration experiments on tabular MDPs")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory. Overrides OUTPUT_DIR and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Skip sweep points whose output already exists.
    #[arg(long, global = true)]
    resume: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reward-free exploration: dataset, visit counts and pseudo-value trace.
    Explore,
    /// Policy optimisation of one task on a saved dataset.
    Optimize {
        /// dataset.csv written by `explore`
        #[arg(long)]
        dataset: PathBuf,
        /// Task index; rewards come from the same stream `run` uses for it
        #[arg(long, default_value_t = 0)]
        task: usize,
    },
    /// Exploration followed by optimisation of every task.
    Run,
    /// Grid over tasks, episodes, bonus constant and seed.
    Sweep,
    /// Visit counts against reachability.
    Coverage {
        /// Use a saved dataset instead of exploring
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Reachability-scaled transition error and value-ratio estimates.
    ModelError {
        /// Use a saved dataset instead of exploring
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Lower-bound constructions and the hardness sweep.
    BanditLb,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(&path)?;
    let out = resolve_output_dir(cli.out.as_deref(), std::env::var("OUTPUT_DIR").ok(), &cfg);
    if let (Some(n), false) = (cli.workers, matches!(cli.command, Command::Sweep)) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Explore => commands::cmd_explore(&cfg, &out),
        Command::Optimize { dataset, task } => commands::cmd_optimize(&cfg, &out, &dataset, task),
        Command::Run => commands::cmd_run(&cfg, &out),
        Command::Sweep => commands::cmd_sweep(&cfg, &out, cli.workers, cli.resume),
        Command::Coverage { dataset } => commands::cmd_coverage(&cfg, &out, dataset.as_deref()),
        Command::ModelError { dataset } => commands::cmd_model_error(&cfg, &out, dataset.as_deref()),
        Command::BanditLb => commands::cmd_bandit_lb(&cfg, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
