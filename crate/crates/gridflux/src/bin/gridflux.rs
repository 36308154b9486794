//! Thin command-line front end; all logic lives in the library's `cli`
//! module.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "gridflux",
    about = "Structure-preserving energy modeling, stability assessment, and energy control at desk scale",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory/summary artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: config, then $GRIDFLUX_OUT, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the run seed (and the fluctuation signal seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Override config values, e.g. --set sim.dt=2e-5.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Decentralized stability assessment; writes report.json.
    Stability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also compute the full interconnected spectrum.
        #[arg(long)]
        oracle: bool,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Run the configured scenario under each controller in the config's
    /// list; writes comparison.csv.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Run the acceptance suite (one pass/fail line per criterion).
    Accept {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match &args.command {
        Command::Simulate {
            config,
            out,
            seed,
            sets,
        } => gridflux::cli::cmd_simulate(config, out.as_deref(), *seed, sets),
        Command::Stability {
            config,
            out,
            oracle,
            sets,
        } => gridflux::cli::cmd_stability(config, out.as_deref(), *oracle, sets),
        Command::Compare {
            config,
            out,
            seed,
            sets,
        } => gridflux::cli::cmd_compare(config, out.as_deref(), *seed, sets),
        Command::Accept { out } => gridflux::cli::cmd_accept(out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
