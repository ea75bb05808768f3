use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use csd_cli::run::{execute, run_dir, RunManifest, MANIFEST};
use csd_cli::{Command, RunConfig};

#[derive(Parser)]
#[command(name = "csd", version, about = "Spreading-depolarization wave analysis")]
struct Cli {
    /// Key-value file with model parameters and run settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, as key=value. Repeatable.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
    /// Directory holding run directories.
    #[arg(long, global = true, env = csd_cli::run::OUTPUT_ROOT_ENV)]
    out: Option<PathBuf>,
    /// Run directory name (defaults to the subcommand).
    #[arg(long, global = true)]
    name: Option<String>,
    #[command(subcommand)]
    command: Top,
}

#[derive(Subcommand)]
enum Top {
    #[command(flatten)]
    Run(Command),
    /// Re-run the command recorded in a manifest.
    Replay {
        /// A manifest.json or the run directory holding one.
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (cmd, params) = match cli.command {
        Top::Run(mut cmd) => {
            let mut cfg = match &cli.config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            for kv in &cli.overrides {
                cfg.apply_override(kv)?;
            }
            let p = cfg.params().context("model_core::parse parameters")?;
            cmd.resolve(&cfg, &p)?;
            (cmd, p)
        }
        Top::Replay { manifest } => {
            let path = if manifest.is_dir() { manifest.join(MANIFEST) } else { manifest };
            let m = RunManifest::load(&path)?;
            (m.command.clone(), m.params()?)
        }
    };
    let name = cli.name.unwrap_or_else(|| cmd.name().to_string());
    let dir = run_dir(cli.out.as_deref(), &name);
    let manifest = execute(&cmd, &params, &dir)?;
    println!("{}", serde_json::to_string_pretty(&manifest.results)?);
    println!("wrote {} files to {}", manifest.outputs.len() + 1, dir.display());
    Ok(())
}
