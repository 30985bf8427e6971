// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

/// Certification, verification and simulation of sampled-data switched
/// linear systems with quantized state feedback.
#[derive(Parser)]
#[command(name = "qsc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Problem description (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "QSC_OUT_DIR", default_value = "qsc-out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the bound chain and dwell-time certificate.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Use this D instead of the computed one.
        #[arg(long)]
        d_override: Option<f64>,
        /// Synthesize a candidate P (replaces any configured P).
        #[arg(long)]
        suggest_p: bool,
    },
    /// Simulate and write the trajectory CSV and events JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        d_override: Option<f64>,
        /// Simulate even if some sampling interval holds two switches.
        #[arg(long)]
        proceed: bool,
    },
    /// Randomized check of the common-Lyapunov decay condition.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 5)]
        time_samples: u32,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        suggest_p: bool,
    },
    /// Tabulate the mismatch measure against the dwell-time bounds.
    Mismatch {
        #[command(flatten)]
        common: Common,
        /// Dwell multiple for the bound columns (default: from the signal).
        #[arg(long)]
        n: Option<u32>,
        /// Table spacing (default: Ts).
        #[arg(long)]
        grid_dt: Option<f64>,
    },
    /// Rerun the two-mode benchmark end to end with a PASS/FAIL summary.
    ReproduceExample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 5)]
        time_samples: u32,
        #[arg(long)]
        threads: Option<usize>,
        /// Skip the randomized property suites.
        #[arg(long)]
        skip_properties: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Certify { common, d_override, suggest_p } => commands::certify(&common, d_override, suggest_p),
        Command::Simulate { common, d_override, proceed } => commands::simulate(&common, d_override, proceed),
        Command::Verify {
            common,
            samples,
            time_samples,
            threads,
            suggest_p,
        } => commands::verify(&common, samples, time_samples, threads, suggest_p),
        Command::Mismatch { common, n, grid_dt } => commands::mismatch(&common, n, grid_dt),
        Command::ReproduceExample {
            common,
            samples,
            time_samples,
            threads,
            skip_properties,
        } => commands::reproduce_example(&common, samples, time_samples, threads, skip_properties),
    };
    match res {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::Outcome::ConfigError as u8)
        }
    }
}
