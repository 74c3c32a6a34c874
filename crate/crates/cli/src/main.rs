//! `keyshare`: settle a renewable energy community from meter data.

mod commands;
mod error;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{BenchArgs, BillArgs, FeasibilityArgs, KeysArgs, OracleArgs, Run, SettleArgs, SweepArgs};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "keyshare", version, about = "Optimize repartition keys and bill community members")]
struct Cli {
    /// JSON file supplying defaults for the meter, price and key settings.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Directory for output artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "keyshare-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize keys, then write allocations, bills and a summary.
    Settle(SettleArgs),
    /// Write initial keys.
    Keys(KeysArgs),
    /// Bill saved settlement flows against the no-community baseline.
    Bill(BillArgs),
    /// Find the largest self-sufficiency floor all members can share.
    Feasibility(FeasibilityArgs),
    /// Settle over a grid of tolerances or floors.
    Sweep(SweepArgs),
    /// Time a settlement of a synthetic community.
    Bench(BenchArgs),
    /// Compare the solver with a brute-force key grid on a tiny input.
    Oracle(OracleArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let run = Run {
        config: cli.config.as_deref(),
        out: &cli.out,
    };
    match cli.command {
        Command::Settle(a) => commands::cmd_settle(a, run),
        Command::Keys(a) => commands::cmd_keys(a, run),
        Command::Bill(a) => commands::cmd_bill(a, run),
        Command::Feasibility(a) => commands::cmd_feasibility(a, run),
        Command::Sweep(a) => commands::cmd_sweep(a, run),
        Command::Bench(a) => commands::cmd_bench(a, run),
        Command::Oracle(a) => commands::cmd_oracle(a, run),
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!("ERROR:{}: {e}", e.category());
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return report(&CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
