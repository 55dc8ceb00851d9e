//! `trimode`: photon statistics of a three-mode parametric source from the
//! command line.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "trimode",
    version,
    about = "Photon statistics of a three-mode parametric source"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, env = "TRIMODE_CONFIG", global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `[output] dir`.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads; overrides `[run] threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Estimate state parameters and nonclassicality indicators from moments.
    Estimate,
    /// Joint photon-number distribution of the single and compound fields.
    Joint,
    /// Conditional compound-field distributions and Fano factors.
    Conditional,
    /// s-ordered joint intensity quasi-distributions.
    Quasi,
    /// Fano factor against detection efficiency.
    Sweep,
    /// Synthetic photocount records.
    Simulate,
    /// State parameters from the interaction strengths over time.
    Predict,
}

fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::parse("")?,
    };
    let threads = cli.threads.or(cfg.run.threads);
    if threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let out = cli
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.output.dir.clone());
    log::info!("writing to {}", out.display());
    match cli.command {
        Command::Estimate => commands::cmd_estimate(&cfg, &out),
        Command::Joint => commands::cmd_joint(&cfg, &out),
        Command::Conditional => commands::cmd_conditional(&cfg, &out),
        Command::Quasi => commands::cmd_quasi(&cfg, &out),
        Command::Sweep => commands::cmd_sweep(&cfg, &out),
        Command::Simulate => commands::cmd_simulate(&cfg, &out),
        Command::Predict => commands::cmd_predict(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("trimode: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
