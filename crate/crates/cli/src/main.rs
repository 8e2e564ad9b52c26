//! `expord`: run checks, simulations, verifications and attractor estimates
//! on a scenario file.
//!
//! Exit codes: 0 pass, 1 fail, 2 usage or input error, 3 indeterminate.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use expord::run::{run_file, Command, RunOptions, USAGE_EXIT};
use expord::scenario::Policy;

#[derive(Parser)]
#[command(
    name = "expord",
    version,
    about = "Exponential-ordering analysis of Nicholson patch models"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate hypotheses and sufficient conditions.
    Check(Args),
    /// Integrate the histories listed under [simulate].
    Simulate(Args),
    /// Randomized checks of the claims listed under [verify].
    Verify(Args),
    /// Estimate the attracting solution from random positive histories.
    Attractor(Args),
}

#[derive(clap::Args)]
struct Args {
    scenario: PathBuf,
    /// Output directory; overrides [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Which condition gates `check`.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Strict,
    Relaxed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Attractor(a) => (Command::Attractor, a),
    };
    let opts = RunOptions {
        seed: args.seed,
        policy: args.policy.map(|p| match p {
            PolicyArg::Strict => Policy::Strict,
            PolicyArg::Relaxed => Policy::Relaxed,
        }),
    };
    match run_file(&args.scenario, command, &opts, args.out.as_deref()) {
        Ok((outcome, written)) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            for path in &written {
                println!("wrote {}", path.display());
            }
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE_EXIT as u8)
        }
    }
}
