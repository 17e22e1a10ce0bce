use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coordscope_cli::commands;
use coordscope_cli::config::RunConfig;
use coordscope_cli::{apply_overrides, GlobalOpts};

/// Coordinated-campaign discovery and annotation pipeline.
#[derive(Parser)]
#[command(name = "coordscope", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the response cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Use this named backend entry instead of the command's default role.
    #[arg(long, global = true)]
    backend: Option<String>,

    /// Print the prompts a run would send, without calling any backend.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect coordinated campaigns and write campaign reports.
    Detect,
    /// Corpus statistics (type/language tallies, daily series).
    Stats {
        /// Campaigns report used to split the daily series; defaults to
        /// the detect output when present.
        #[arg(long)]
        campaigns: Option<PathBuf>,
    },
    /// Label posts with concerns and write frequency reports.
    Concern {
        /// Also export instruction pairs for student-model training.
        #[arg(long)]
        export_instructions: bool,
        /// Label a seeded uniform sample of this size instead of the
        /// whole corpus.
        #[arg(long)]
        teacher_sample: Option<usize>,
    },
    /// Annotate campaign slices (goal, tactics, framing).
    Annotate,
    /// Validate annotation quality against a ground-truth catalogue.
    Eval {
        /// Ground-truth CSV; defaults to the config's [ground_truth].
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Score a predictions file against gold labels.
    Metrics {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let opts = GlobalOpts {
        seed: cli.seed,
        cache_dir: cli.cache_dir.clone(),
        backend: cli.backend.clone(),
        dry_run: cli.dry_run,
    };

    let config_path = match &cli.config {
        Some(path) => path.clone(),
        None => {
            eprintln!("error: --config is required");
            return ExitCode::from(2);
        }
    };
    let mut config = match RunConfig::load(&config_path) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    apply_overrides(&mut config, &opts);

    let result = match &cli.command {
        Command::Detect => commands::cmd_detect(&config, &opts).map(|_| ()),
        Command::Stats { campaigns } => {
            commands::cmd_stats(&config, &opts, campaigns.as_deref())
        }
        Command::Concern {
            export_instructions,
            teacher_sample,
        } => commands::cmd_concern(&config, &opts, *export_instructions, *teacher_sample)
            .map(|_| ()),
        Command::Annotate => commands::cmd_annotate(&config, &opts).map(|_| ()),
        Command::Eval { ground_truth } => {
            commands::cmd_eval(&config, &opts, ground_truth.as_deref()).map(|_| ())
        }
        Command::Metrics { predictions, gold } => {
            commands::cmd_metrics(&config, &opts, predictions, gold)
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
