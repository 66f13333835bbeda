//! `emo3d`: dataset generation, training, evaluation, rendering and corpus
//! statistics behind one entry point.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 backend, 4 evaluation.

mod backends;
mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigFile;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "emo3d", version, about = "Emo3D metric, baselines and dataset tooling")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for embedding and API response caches.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    log_level: Option<String>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML or JSON file with global keys and one table per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a triad dataset (offline synthetic clients unless --live).
    Datagen(commands::datagen::DatagenArgs),
    /// Check a dataset file and print its split counts.
    Validate(commands::validate::ValidateArgs),
    /// Train a baseline and write a checkpoint directory.
    Train(commands::train::TrainArgs),
    /// Score a checkpoint (or the oracle) with the Emo3D metric.
    Eval(commands::eval::EvalArgs),
    /// Render blendshape weights to a PNG, or export the canonical rig.
    Render(commands::render::RenderArgs),
    /// Per-class corpus statistics as JSON.
    Stats(commands::stats::StatsArgs),
    /// Merge and rank evaluation reports.
    Report(commands::report::ReportArgs),
}

/// Global options after merging the config file under the flags.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Globals {
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub log_level: String,
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub config: ConfigFile,
}

pub const DEFAULT_SEED: u64 = 7;

fn resolve_globals(args: GlobalArgs) -> Result<Globals, CliError> {
    let config = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let cache_dir = match args.cache_dir {
        Some(d) => Some(d),
        None => config
            .global::<PathBuf>("cache_dir")?
            .or_else(|| std::env::var_os(emo3d::embeddings::CACHE_DIR_ENV).map(PathBuf::from)),
    };
    Ok(Globals {
        seed: args.seed.or(config.global("seed")?).unwrap_or(DEFAULT_SEED),
        cache_dir,
        log_level: args.log_level.or(config.global("log_level")?).unwrap_or_else(|| "info".into()),
        jobs: args.jobs.or(config.global("jobs")?),
        config,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let globals = resolve_globals(cli.global)?;
    let level: log::LevelFilter =
        globals.log_level.parse().map_err(|_| CliError::Usage(format!("unknown log level {:?}", globals.log_level)))?;
    env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).init();
    if let Some(jobs) = globals.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        // Read by the worker pool on first use; nothing has started it yet.
        std::env::set_var("RAYON_NUM_THREADS", jobs.to_string());
    }
    match cli.command {
        Command::Datagen(a) => commands::datagen::run(a, &globals),
        Command::Validate(a) => commands::validate::run(a, &globals),
        Command::Train(a) => commands::train::run(a, &globals),
        Command::Eval(a) => commands::eval::run(a, &globals),
        Command::Render(a) => commands::render::run(a, &globals),
        Command::Stats(a) => commands::stats::run(a, &globals),
        Command::Report(a) => commands::report::run(a, &globals),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
