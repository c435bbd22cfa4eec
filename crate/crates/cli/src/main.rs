mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Options};
use config::ExperimentConfig;

/// Gauss-Newton condition numbers and their bounds for small networks.
#[derive(Parser)]
#[command(name = "gn-lens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (flat key = value file).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel cells (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also render SVG line charts.
    #[arg(long)]
    svg: bool,
    /// Dump the full GN spectrum and rank-sensitivity sweep (analyze).
    #[arg(long)]
    spectrum: bool,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Fill the wall_ms column (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Condition number and bounds for a single network.
    Analyze(Common),
    /// Grid over depth, width, β, α, kernel or filters.
    Sweep(Common),
    /// Gradient descent with κ and bound traces.
    Train(Common),
    /// Magnitude pruning at init, then training.
    Prune(Common),
    /// ZCA-whiten a dataset.
    Whiten(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, action): (&Common, fn(&ExperimentConfig, &Options) -> Result<(), CliError>) = match &cli.command {
        Command::Analyze(c) => (c, commands::analyze),
        Command::Sweep(c) => (c, commands::sweep),
        Command::Train(c) => (c, commands::train_cmd),
        Command::Prune(c) => (c, commands::prune_cmd),
        Command::Whiten(c) => (c, commands::whiten_cmd),
    };
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", common.config.display())))?;
    let base = common.config.parent().map(PathBuf::from).unwrap_or_default();
    let mut cfg = ExperimentConfig::parse(&text, base)?;
    if let Some(seed) = common.seed_override {
        cfg.seeds = vec![seed];
    }
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let opts = Options {
        out: commands::default_out(&cfg, common.out.as_deref()),
        svg: common.svg,
        spectrum: common.spectrum,
        timing: common.timing,
    };
    action(&cfg, &opts)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GN_LENS_LOG", "error")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gn-lens: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
