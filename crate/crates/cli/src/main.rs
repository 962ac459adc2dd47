//! `remglass`: solver, simulators and point-process checks from the command line.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::info;

use crate::commands::Context;
use crate::config::{ConfigFile, Params};
use crate::error::CliError;
use crate::output::{render, Format, Header};

/// Base seed used when neither the config nor `--seed` sets one.
pub const DEFAULT_SEED: u64 = 20_260_101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Solve,
    Simulate,
    Overlap,
    Chaos,
    Tail,
    Ppverify,
    PhaseDiagram,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Overlap => "overlap",
            Command::Chaos => "chaos",
            Command::Tail => "tail",
            Command::Ppverify => "ppverify",
            Command::PhaseDiagram => "phase-diagram",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "remglass", version, about = "REM-type spin glass solver and finite-size simulator")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Configuration file (key = value lines, [section] per command).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides `workers` from the config. Never changes results.
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; overrides `format` from the config.
    #[arg(long, value_parser = ["csv", "jsonl"])]
    format: Option<String>,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let command = cli.command.name();
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
            ConfigFile::parse(&text)?
        }
        None => ConfigFile::default(),
    };
    let mut params = Params::new(&file, command);
    if let Some(s) = cli.seed {
        params.set("seed", s.to_string());
    }
    if let Some(f) = &cli.format {
        params.set("format", f.clone());
    }
    if let Some(w) = cli.workers {
        params.set("workers", w.to_string());
    }
    if let Some(o) = &cli.out {
        params.set("out", o.display().to_string());
    }
    let base_seed = params.u64("seed", DEFAULT_SEED)?;
    let format = match params.choice_silent("format", "csv", &["csv", "jsonl"])?.as_str() {
        "jsonl" => Format::Jsonl,
        _ => Format::Csv,
    };
    let workers = params.usize_silent("workers", 0)?;
    let out = params.optional_string_silent("out").map(PathBuf::from);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(None, "workers", e.to_string()))?;
    info!("running {command} with {} worker(s)", pool.current_num_threads());
    let ctx = Context { base_seed };
    let outcome = pool.install(|| commands::run(command, &mut params, &ctx))?;
    let config = params.finish()?;
    let header = Header { version: env!("CARGO_PKG_VERSION"), command: command.to_string(), base_seed, config, records: outcome.records };
    let text = render(&header, &outcome.tables, format);
    match out {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Io { path: path.display().to_string(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("remglass: {e}");
            e.exit_code()
        }
    }
}
