// SPDX-License-Identifier: Apache-2.0

//! `blade-dlt` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 structural
//! pipeline error, 3 extraction finished with a fault verdict.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use blade_dlt_core::ModelError;
use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::Config;
pub use report::ReportFile;

/// Environment variable overriding the config seed.
pub const SEED_ENV: &str = "BLADE_DLT_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_STRUCTURE: i32 = 2;
pub const EXIT_FAULT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("pipeline: {0}")]
    Structure(#[from] ModelError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Structure(_) => EXIT_STRUCTURE,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "blade-dlt",
    version,
    about = "Delay-line test extraction for Blade pipelines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a config; prints timing warnings.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run the full measurement procedure and write a JSON report.
    Extract {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Directory receiving one VCD per measurement run.
        #[arg(long)]
        vcd: Option<PathBuf>,
        /// KIND:IDX:OP:VAL, e.g. delta_small:1:scale:1.2
        #[arg(long = "fault")]
        faults: Vec<String>,
    },
    /// Quantization error sweep over tester resolutions, written as CSV.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// LO:HI[:STEP] or a comma-separated list, in ps.
        #[arg(long)]
        resolutions: String,
        #[arg(long)]
        trials: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// DfT area estimate.
    Area {
        #[arg(short = 'n', long = "stages")]
        n: u32,
        /// KEY=VAL cell library override.
        #[arg(long = "override")]
        overrides: Vec<String>,
    },
}

fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| {
                CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            })
        }
        Err(_) => Ok(None),
    }
}

pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Validate { config } => commands::cmd_validate(&config, out),
        Command::Extract {
            config,
            output,
            vcd,
            faults,
        } => commands::cmd_extract(
            &commands::ExtractArgs {
                config,
                output,
                vcd,
                faults,
                seed: seed_override()?,
            },
            out,
        ),
        Command::Sweep {
            config,
            resolutions,
            trials,
            output,
        } => commands::cmd_sweep(
            &config,
            &resolutions,
            trials,
            &output,
            seed_override()?,
            out,
        ),
        Command::Area { n, overrides } => commands::cmd_area(n, &overrides, out),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = if informational {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return if informational { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
