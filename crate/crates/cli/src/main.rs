//! Command-line front end for the spectral magnetization solver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use llg_cli::commands::{self, GlobalOpts};

#[derive(Parser)]
#[command(
    name = "llg",
    version,
    about = "Spectral simulator for damped magnetization precession and heat flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for sweeps and kernel builds
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory for artifacts, overriding the config
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Seed recorded with the run, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress tables and progress on stdout
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configured run and write its artifacts
    Run { config: PathBuf },

    /// March a refinement schedule and tabulate the convergence evidence
    Sweep {
        config: PathBuf,
        /// Schedule file: [[entry]] tables with modes and epsilon
        #[arg(long)]
        schedule: PathBuf,
    },

    /// Execute a named verification suite (IDENTITIES, DEMAG, WEAKFORM, ALL)
    Check {
        #[arg(default_value = "ALL")]
        suite: String,
    },

    /// Build the stray-field kernel for a config's grid and cache it
    DemagKernel {
        config: PathBuf,
        /// Where the kernel cache is written
        #[arg(long)]
        cache: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = GlobalOpts {
        jobs: cli.jobs.unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }),
        output: cli.output,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let outcome = match &cli.command {
        Command::Run { config } => commands::cmd_run(config, &opts),
        Command::Sweep { config, schedule } => commands::cmd_sweep(config, schedule, &opts),
        Command::Check { suite } => commands::cmd_check(suite, &opts),
        Command::DemagKernel { config, cache } => commands::cmd_demag_kernel(config, cache, &opts),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
