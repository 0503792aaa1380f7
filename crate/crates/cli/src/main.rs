//! `delaystab` command line: simulate delay systems, compute segment norms,
//! run stability checks, fit KL envelopes and verify Lyapunov conditions.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{LyapunovCheck, Precision, Property, RunConfig};
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(
    name = "delaystab",
    version,
    about = "Stability toolkit for retarded delay equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out`, else `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = all cores.
    #[arg(long, global = true, env = "DELAYSTAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one history; writes trajectory.csv and summary.json.
    Simulate,
    /// Norms of a history or a sampled batch; writes norms.json and segments.json.
    Norms,
    /// Run a stability check; writes report.json.
    Check {
        /// ls, ga, uga, lags, rfc or gas-vs-ugas (overrides `property`).
        property: Option<String>,
    },
    /// Fit a KL envelope; writes envelope.csv, omega.csv and envelope.json.
    Envelope,
    /// Verify Lyapunov conditions; writes report.json.
    Lyapunov {
        /// theorem5, theorem6 or rfc-sufficient (overrides `lyapunov.check`).
        check: Option<String>,
    },
}

fn parse_name<T: serde::de::DeserializeOwned>(name: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| CliError::Config(format!("unknown name `{name}`")))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let path = cli.config.ok_or(CliError::Missing("--config"))?;
    let mut cfg = RunConfig::load(&path)?;
    match &cli.command {
        Command::Check { property: Some(p) } => cfg.property = Some(parse_name::<Property>(p)?),
        Command::Lyapunov { check: Some(c) } => {
            let check = parse_name::<LyapunovCheck>(c)?;
            cfg.lyapunov.as_mut().ok_or(CliError::Missing("lyapunov"))?.check = check;
        }
        _ => {}
    }
    cfg.resolve(cli.seed);
    cfg.validate()?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let dir = cli
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let out = OutDir::create(&dir)?;
    match cfg.precision {
        Precision::F64 => dispatch::<f64>(&cli.command, &cfg, &out),
        Precision::F32 => dispatch::<f32>(&cli.command, &cfg, &out),
    }
}

fn dispatch<T: delaystab::Scalar>(cmd: &Command, cfg: &RunConfig, out: &OutDir) -> Result<u8, CliError> {
    match cmd {
        Command::Simulate => commands::simulate_cmd::<T>(cfg, out),
        Command::Norms => commands::norms_cmd::<T>(cfg, out),
        Command::Check { .. } => commands::check_cmd::<T>(cfg, out),
        Command::Envelope => commands::envelope_cmd::<T>(cfg, out),
        Command::Lyapunov { .. } => commands::lyapunov_cmd::<T>(cfg, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Core(delaystab::Error::Escaped { time })) => {
            eprintln!("error: trajectory escaped at t = {time}");
            ExitCode::from(commands::EXIT_ESCAPE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
