//! Library side of the `ucbzero` binary: config parsing, subcommands and
//! output bookkeeping.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

/// `--out` wins, then `OUTPUT_DIR`, then `output_dir` from the config, then
/// `./out`.
pub fn resolve_output_dir(flag: Option<&Path>, env: Option<String>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
