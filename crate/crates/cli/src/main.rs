use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rescontrol::config::Profile;
use rescontrol::controller::ControllerVariant;
use rescontrol_cli::{cmd_batch, cmd_compare, cmd_simulate, CliError, CliResult, Report};

/// Online-learning reservoir feedforward control experiments.
#[derive(Debug, Parser)]
#[command(name = "rescontrol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the profile named in the scenario file
    /// (sim-paper, sim-opt-pd, surrogate-paper).
    #[arg(long)]
    profile: Option<Profile>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one seeded episode and write its trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run many seeds and write per-tick mean/std and per-seed RMSE.
    Batch {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
    },
    /// Run several controller variants on identical seeds and tabulate RMSE.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variants, e.g. esn+pd,linear+pd,pd.
        #[arg(long, value_delimiter = ',', default_value = "esn+pd,linear+pd,pd")]
        variants: Vec<ControllerVariant>,
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
    },
}

fn print_report(report: &Report) {
    for line in &report.lines {
        println!("{line}");
    }
    for file in &report.files {
        println!("wrote {}", file.display());
    }
}

fn run(cli: Cli) -> CliResult<Report> {
    match cli.command {
        Command::Simulate { common, seed } => cmd_simulate(&common.config, seed, &common.out, common.profile),
        Command::Batch {
            common,
            seeds,
            base_seed,
        } => cmd_batch(&common.config, seeds, base_seed, &common.out, common.profile),
        Command::Compare {
            common,
            variants,
            seeds,
            base_seed,
        } => cmd_compare(&common.config, &variants, seeds, base_seed, &common.out, common.profile),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print_report(&report);
            ExitCode::SUCCESS
        }
        Err(err) => {
            if let CliError::Diverged { report, .. } = &err {
                print_report(report);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
