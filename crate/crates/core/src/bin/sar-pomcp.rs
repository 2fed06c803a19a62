use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sar_pomcp::harness::{load_grid, run_experiment, sweep, write_summaries, write_trials};
use sar_pomcp::{make_environment, EnvironmentFamily, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Search-and-rescue POMCP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-trial results here.
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// Run every configuration of a grid file.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a map of the given family in ASCII form.
    GenMap {
        #[arg(long)]
        family: EnvironmentFamily,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> sar_pomcp::Result<()> {
    match cli.command {
        Command::Run { config, out, trials_out } => {
            let config = ExperimentConfig::load(config)?;
            let experiment = run_experiment(&config)?;
            write_summaries(File::create(out)?, std::slice::from_ref(&experiment.summary))?;
            if let Some(path) = trials_out {
                write_trials(File::create(path)?, &experiment.trials)?;
            }
            let s = &experiment.summary;
            eprintln!(
                "success {:.2}  mean steps {:.2}  robs {}  reward {}  plan time {:.1}s",
                s.success_rate, s.mean_steps, s.total_robs, s.total_reward, s.total_time_s
            );
            if !s.is_complete() {
                eprintln!("{} trial(s) failed: {}", s.failed_trials, s.error);
            }
        }
        Command::Sweep { grid, out } => {
            let rows = sweep(&load_grid(grid)?);
            write_summaries(File::create(out)?, &rows)?;
            let failed = rows.iter().filter(|r| !r.is_complete()).count();
            eprintln!("{} configuration(s), {failed} incomplete", rows.len());
        }
        Command::GenMap { family, seed, out } => {
            std::fs::write(out, make_environment(family, seed)?.to_ascii())?;
        }
    }
    Ok(())
}
