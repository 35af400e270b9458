//! `unroll`: simulate rolling-shutter pairs, invert them to GS frames at any
//! scanline, evaluate the results and run the invariant self-check.
//!
//! Exit codes: 0 success, 1 validation failure, 2 IO or configuration error.
//! `UNROLL_THREADS` overrides the worker thread count.

mod eval;
mod invert;
mod manifest;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::eval::EvalArgs;
use crate::invert::InvertArgs;

#[derive(Parser)]
#[command(name = "unroll", version, about = "Rolling-shutter inversion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Cmd {
    /// Render an RS pair with ground truth from a scene description.
    Simulate {
        /// Scene config (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// GT GS scanlines to render, comma separated. Defaults to the first and middle scanline.
        #[arg(long, value_delimiter = ',')]
        scanlines: Option<Vec<f64>>,
        /// Render this many evenly spaced GT scanlines instead.
        #[arg(long, conflicts_with = "scanlines")]
        scanline_count: Option<usize>,
    },
    /// Recover GS frames at the requested scanlines from an RS pair.
    Invert(InvertArgs),
    /// Compare predicted GS frames against ground truth.
    Eval(EvalArgs),
    /// Run the invariant suite.
    Selfcheck {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    ValidationFailed,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("UNROLL_THREADS") {
        let n: usize = value
            .parse()
            .map_err(|_| anyhow::anyhow!("UNROLL_THREADS must be a positive integer, got {value:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    configure_threads()?;
    match cli.command {
        Cmd::Simulate {
            config,
            out,
            scanlines,
            scanline_count,
        } => simulate::run(&config, &out, scanlines, scanline_count),
        Cmd::Invert(args) => invert::run(&args),
        Cmd::Eval(args) => eval::run(&args),
        Cmd::Selfcheck { seed } => {
            let config = unroll_core::selfcheck::SelfcheckConfig {
                seed,
                ..Default::default()
            };
            let results = unroll_core::selfcheck::run_selfcheck(&config);
            print!("{}", unroll_core::selfcheck::format_report(&results));
            Ok(if results.iter().all(|r| r.passed) {
                Status::Ok
            } else {
                Status::ValidationFailed
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ValidationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
