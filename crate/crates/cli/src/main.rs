use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use isac_cli::{run, Command, Overrides};

/// Transmit covariance design for MIMO sensing and communication with a
/// prior on the target angle.
#[derive(Debug, Parser)]
#[command(name = "isac", version)]
struct Args {
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; `.json` selects JSON. Without it the table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per point.
    #[arg(long)]
    trials: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        out: args.out.clone(),
        seed: args.seed,
        trials: args.trials,
    };
    let to_file = args.out.is_some();
    match run(args.command, &args.config, &overrides) {
        Ok(outcome) => {
            if to_file {
                println!("{}", outcome.summary);
            } else {
                eprintln!("{}", outcome.summary);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("isac: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
