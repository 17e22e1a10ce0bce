//! Library surface of the pipeline CLI, exposed so integration tests can
//! drive commands in-process with injected configs.

pub mod backends;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use thiserror::Error;

/// Global options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOpts {
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub backend: Option<String>,
    pub dry_run: bool,
}

/// Command failures, classed so the binary can exit with distinct codes:
/// config 2, I/O 3, backend 4.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("backend error: {0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Backend(_) => 4,
        }
    }
}

/// Applies the `--seed` override onto a loaded config.
pub fn apply_overrides(config: &mut config::RunConfig, opts: &GlobalOpts) {
    if let Some(seed) = opts.seed {
        config.seeds.master = seed;
    }
}
