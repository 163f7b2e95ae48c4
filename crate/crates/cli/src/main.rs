//! `imm-learn`: simulate tracking datasets, learn IMM parameters from them
//! and evaluate the result.

mod commands;
mod io;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AblationArgs, EvaluateArgs, SimulateArgs, SweepArgs, TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "imm-learn", version, about = "Learn IMM filter parameters from position measurements")]
struct Cli {
    /// Worker threads for parallel work (0 = one per core).
    #[arg(long, global = true, env = "IMM_LEARN_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset of simulated trajectories.
    Simulate(SimulateArgs),
    /// Learn filter parameters on the train split of a dataset.
    Train(TrainArgs),
    /// Score parameters on a dataset against ground truth.
    Evaluate(EvaluateArgs),
    /// Train and evaluate over many fresh datasets.
    Ablation(AblationArgs),
    /// Project the loss along one parameter.
    Sweep(SweepArgs),
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<imm_learn::Error> for CliError {
    fn from(e: imm_learn::Error) -> Self {
        Self {
            code: if e.is_numeric() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    if cli.jobs > 0 {
        // the global pool serves the single-run commands
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablation(a) => commands::ablation(a, cli.jobs),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
