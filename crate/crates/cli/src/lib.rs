//! Command-line driver for the pulsenet pipeline.

pub mod commands;
pub mod config;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "PULSENET_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "pulsenet",
    version,
    about = "Temporal-coded spiking classifier for LiDAR pulse maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate train/test delay-map datasets for each noise range.
    GenData(Flags),
    /// Train a network on one noise range.
    Train(Flags),
    /// Evaluate a checkpoint with the event-driven engine.
    Eval(Flags),
    /// Generate, train and evaluate every noise range.
    Bench(Flags),
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    Ok(())
}

type Handler = fn(&RunConfig) -> Result<u8>;

pub fn run(cli: Cli) -> Result<u8> {
    init_threads()?;
    let (name, flags, command): (&str, &Flags, Handler) = match &cli.command {
        Command::GenData(f) => ("gen-data", f, commands::gen_data),
        Command::Train(f) => ("train", f, commands::train),
        Command::Eval(f) => ("eval", f, commands::eval),
        Command::Bench(f) => ("bench", f, commands::bench),
    };
    command(&RunConfig::resolve(name, flags)?)
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
