//! Command-line front end: dataset ingestion, training, evaluation,
//! assignment export, gradient checking, and synthetic dataset generation.
//!
//! Exit codes are stable: 0 success, 1 internal error, 2 bad configuration
//! or arguments, 3 dataset ingestion failure, 4 graph index out of range,
//! 5 gradient-check failure. Diagnostics go to stderr; stdout carries
//! machine-readable `key=value` results only.

mod args;
mod checkpoint;
mod commands;
mod config;
mod dataset_io;
mod exit;
mod export;
mod manifest;
mod metrics;

use std::process::ExitCode;

use crate::args::Args;
use crate::exit::CliError;

const USAGE: &str = "usage: diffpool <command> [options]

commands:
  train                train with stratified cross-validation
    --dataset <dir>    TU-format dataset directory (required)
    --out <dir>        output directory for artifacts (required)
    --config <file>    key=value config file
    --seed <n> --folds <k> --workers <n>
    --no-link-pred --no-entropy --det-pool --flat-baseline
    --<config-key> <value>   override any config key
  eval                 evaluate a checkpoint on a dataset
    --checkpoint <file> --dataset <dir>
  export-assignments   export per-level cluster assignments
    --checkpoint <file> --dataset <dir> --graphs <i,j,..>
    --out <path> --format json|dot [--soft]
  gradcheck            run the finite-difference gradient suite
    --seed <n> [--inject-fault]
  synth                generate a synthetic TU dataset
    --kind planted-hierarchy --num-graphs <n> --seed <n> --out <dir>

environment:
  DIFFPOOL_<KEY>=<value> overrides config keys (e.g. DIFFPOOL_HIDDEN_DIM=32)";

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let Some((command, rest)) = argv.split_first() else {
        eprintln!("{USAGE}");
        return ExitCode::from(exit::BAD_CONFIG);
    };
    let args = match Args::parse(rest) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::BAD_CONFIG);
        }
    };
    let result = match command.as_str() {
        "train" => commands::train::run(&args),
        "eval" => commands::eval::run(&args),
        "export-assignments" => commands::export_assignments::run(&args),
        "gradcheck" => commands::gradcheck::run(&args),
        "synth" => commands::synth::run(&args),
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            return ExitCode::SUCCESS;
        }
        other => {
            eprintln!("error: unknown command {other:?}\n{USAGE}");
            return ExitCode::from(exit::BAD_CONFIG);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
