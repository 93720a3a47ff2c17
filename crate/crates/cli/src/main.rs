//! Command-line driver: deterministic, file-based workflows over the
//! solver, simulator, audits, and market-maker checks.
//!
//! Exit codes: 0 all checks passed, 2 a check failed, 1 configuration or
//! I/O error. `SELFRES_THREADS` caps batch parallelism.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

mod cmd;
mod config;
mod output;
mod svg;

use cmd::Ctx;
use output::Formats;

#[derive(Parser)]
#[command(
    name = "selfres",
    version,
    about = "Self-resolving prediction markets: incentive bounds, simulation, audits, and the equivalent market maker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config for this command (schema version 1).
    #[arg(long)]
    config: PathBuf,
    /// Directory artifacts are written into (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Base RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inclusive seed range `a..b` for per-seed batches.
    #[arg(long)]
    seeds: Option<String>,
    /// Artifact formats (repeatable): csv, json, svg. Default: csv.
    #[arg(long)]
    format: Vec<String>,
    /// Display score tables in bits instead of nats (artifacts stay nats).
    #[arg(long)]
    bits: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep (y1, delta, eta, epsilon) -> (eps', k_min) tables.
    Bounds(Common),
    /// Emit gain-bound curves and eps' families.
    Curves(Common),
    /// Run seeded markets and persist transcripts.
    Simulate(Common),
    /// Audit the truthful profile against the epsilon bound.
    Audit(Common),
    /// Equilibrium payoff structures and the relabeling check.
    Equilibria(Common),
    /// Market-maker equivalence identities and transcript replay.
    AmmCheck(Common),
}

fn setup_threads() {
    if let Ok(value) = std::env::var("SELFRES_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn context(common: &Common) -> Result<(Ctx<'_>, &Path)> {
    let seeds = cmd::parse_seeds(common.seed, common.seeds.as_deref())?;
    if seeds.is_empty() {
        anyhow::bail!("seed range is empty");
    }
    let formats = Formats::from_flags(&common.format)?;
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating output dir {}", common.out.display()))?;
    let config_dir = common.config.parent().unwrap_or_else(|| Path::new("."));
    Ok((
        Ctx {
            config_dir,
            out: &common.out,
            seeds,
            formats,
            bits: common.bits,
        },
        common.config.as_path(),
    ))
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Bounds(common) => {
            let (ctx, path) = context(common)?;
            cmd::bounds(&ctx, &config::load(path)?)
        }
        Command::Curves(common) => {
            let (ctx, path) = context(common)?;
            cmd::curves(&ctx, &config::load(path)?)
        }
        Command::Simulate(common) => {
            let (ctx, path) = context(common)?;
            cmd::simulate(&ctx, &config::load(path)?)
        }
        Command::Audit(common) => {
            let (ctx, path) = context(common)?;
            cmd::audit(&ctx, &config::load(path)?)
        }
        Command::Equilibria(common) => {
            let (ctx, path) = context(common)?;
            cmd::equilibria(&ctx, &config::load(path)?)
        }
        Command::AmmCheck(common) => {
            let (ctx, path) = context(common)?;
            cmd::amm_check(&ctx, &config::load(path)?)
        }
    }
}

fn main() -> ExitCode {
    setup_threads();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
