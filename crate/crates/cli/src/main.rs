use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use flexw_cli::config::{self, CommandKind, RunConfig};
use flexw_cli::manifest::{self, MANIFEST_FILE};
use flexw_cli::{exit_code, EXIT_OK};

#[derive(Parser)]
#[command(name = "flexw", version, about = "Difficulty-based sample weighting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory that receives the reports and the manifest.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the configuration's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample weight curves over difficulty and name their priority modes.
    WeightsCurve(Common),
    /// Optimal-weight ratio of a difficulty profile and the mode it implies.
    Tau(Common),
    /// Generate a scenario and train every configured schedule on it.
    Train(Common),
    /// Grid search over FlexW parameter boxes.
    Sweep(Common),
    /// Bias-variance study of region weighting.
    Biasvar(Common),
    /// Repeat a recorded run from its manifest.
    Rerun {
        /// Manifest file, or a directory containing one.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "out-rerun")]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn resolve(kind: CommandKind, common: &Common) -> anyhow::Result<RunConfig> {
    let cfg = match &common.config {
        Some(path) => config::load(path, kind)?,
        None => config::parse("", kind, std::path::Path::new("."))?,
    };
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (manifest, _) = match cli.command {
        Command::Rerun { manifest, out_dir, workers } => {
            let path = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest };
            manifest::rerun(&path, &out_dir, workers).with_context(|| format!("re-running {}", path.display()))?
        }
        other => {
            let (kind, common) = match other {
                Command::WeightsCurve(c) => (CommandKind::WeightsCurve, c),
                Command::Tau(c) => (CommandKind::Tau, c),
                Command::Train(c) => (CommandKind::Train, c),
                Command::Sweep(c) => (CommandKind::Sweep, c),
                Command::Biasvar(c) => (CommandKind::Biasvar, c),
                Command::Rerun { .. } => unreachable!(),
            };
            let cfg = resolve(kind, &common)?;
            manifest::run(&cfg, &common.out_dir, common.workers.unwrap_or_else(default_workers))?
        }
    };
    eprintln!(
        "{}: wrote {} report file(s) in {:.2}s",
        manifest.command.as_str(),
        manifest.outputs.len(),
        manifest.duration_secs
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
