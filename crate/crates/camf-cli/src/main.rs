//! `camf` — sediment transport over raster catchments and greedy selection
//! of afforestation sites that minimize sediment yield at the outlet.
//!
//! Subcommands cover the full pipeline: `rusle` builds the production raster
//! from erosion factors, `baseflow` runs the accumulation sweep, `optimize`
//! runs the greedy site selection, `synth` fabricates seeded test
//! catchments, `crop` cuts sub-grids, and `bench` times the kernels.
//!
//! Exit codes: 0 on success, 2 for configuration and argument errors, 3 for
//! file errors, 4 for numeric or domain errors.

mod bench;
mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ConfigError;

#[derive(Parser)]
#[command(
    name = "camf",
    version,
    about = "Sediment transport simulation and afforestation site selection on raster catchments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the base-flow sediment accumulation and yield
    Baseflow(commands::BaseflowArgs),
    /// Greedily select afforestation cells that minimize sediment yield
    Optimize(commands::OptimizeArgs),
    /// Build the local sediment production raster from RUSLE factors
    Rusle(commands::RusleArgs),
    /// Generate a seeded synthetic catchment fixture
    Synth(commands::SynthArgs),
    /// Cut a window out of an ASCII-grid raster
    Crop(commands::CropArgs),
    /// Time base flow and one selection iteration across problem sizes
    Bench(bench::BenchArgs),
}

/// Everything a command can fail with, split by exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing run configuration; exit code 2.
    Config(ConfigError),
    /// Library error; exit code 3 for file problems, 4 for domain problems.
    Lib(camf::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Lib(e) => e.fmt(f),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<camf::Error> for CliError {
    fn from(e: camf::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use camf::Error::*;
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(err) => match err {
                Io { .. } | MalformedHeader { .. } | NonNumericToken { .. } | TokenCount { .. }
                | ParamFile { .. } => 3,
                _ => 4,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Baseflow(args) => commands::cmd_baseflow(args),
        Command::Optimize(args) => commands::cmd_optimize(args),
        Command::Rusle(args) => commands::cmd_rusle(args),
        Command::Synth(args) => commands::cmd_synth(args),
        Command::Crop(args) => commands::cmd_crop(args),
        Command::Bench(args) => bench::cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
