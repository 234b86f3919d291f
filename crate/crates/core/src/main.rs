use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use refsafe::cli;

/// Safe adaptive control simulator with reference-level safety filters.
#[derive(Parser)]
#[command(name = "refsafe", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several filters on the same scenario.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated filter names.
        #[arg(long, default_value = "PlantQP,ReferenceQP,RobustSOCP")]
        filters: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the SOCP solver against the grid oracle on random instances.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("REFSAFE_LOG", "warn")).init();
    let args = Args::parse();
    let code = match args.command {
        Command::Run { config, out } => cli::cmd_run(&config, &out),
        Command::Compare { config, filters, out } => cli::cmd_compare(&config, &filters, &out),
        Command::OracleCheck { count, seed } => cli::cmd_oracle_check(count, seed),
    };
    ExitCode::from(code as u8)
}
