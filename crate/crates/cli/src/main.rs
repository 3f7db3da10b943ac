mod cache;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::defaults;

/// Quantum walks with position-dependent coins: evolution, Jost solutions,
/// scattering data and dispersive decay.
#[derive(Parser, Debug)]
#[command(name = "qwalk", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the random initial states; recorded in every output.
    #[arg(long, global = true, default_value_t = defaults::SEED)]
    seed: u64,
    #[arg(long, global = true, default_value = defaults::CACHE_DIR)]
    cache_dir: PathBuf,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchArg {
    Minus,
    Plus,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchesArg {
    Minus,
    Plus,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RouteArg {
    Direct,
    Kernel,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve an initial state for t steps.
    Simulate {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        t: usize,
        /// `delta`, `random`, or a path to a JSON spinor field.
        #[arg(long, default_value = "delta")]
        initial: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dispersion relation of the constant-coin walk.
    Dispersion {
        #[arg(long)]
        rho0: f64,
        #[arg(long, default_value_t = defaults::GRID)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Jost solutions on a grid of quasi-momenta.
    Jost {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_enum, default_value_t = BranchArg::Minus)]
        branch: BranchArg,
        #[arg(long, default_value_t = defaults::GRID)]
        grid: usize,
        #[arg(long, default_value_t = defaults::DELTA)]
        delta: f64,
        /// Sites kept on each side of the coin support.
        #[arg(long, default_value_t = defaults::WINDOW_MARGIN)]
        margin: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transmission, reflection, band-edge resonances and bound states.
    Scattering {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_enum, default_value_t = BranchesArg::Both)]
        branch: BranchesArg,
        #[arg(long, default_value_t = defaults::GRID)]
        grid: usize,
        #[arg(long, default_value_t = defaults::UNITARITY_TOL)]
        tol: f64,
        /// Output stem; `<stem>.json` and `<stem>.csv` are written.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sup-norm decay of the walk on the continuous spectrum.
    Dispersive {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = defaults::TMAX)]
        tmax: usize,
        /// Explicit comma-separated times; overrides the default schedule.
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = RouteArg::Direct)]
        route: RouteArg,
        /// `delta`, `random`, or a path to a JSON spinor field.
        #[arg(long, default_value = "delta")]
        initial: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power-law fit of a decay table.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        /// Route whose rows are fitted; defaults to the first one present.
        #[arg(long)]
        route: Option<String>,
        /// Writes the JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a profile against the standing assumptions.
    Validate {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.global.log_level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.global.threads {
        if !qwalk::par::configure_threads(n) {
            log::warn!("thread pool already configured; --threads ignored");
        }
    }
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
