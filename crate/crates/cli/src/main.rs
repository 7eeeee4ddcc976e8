//! `fansite`: generate synthetic SEM benchmarks, train the any-subset flow,
//! discover Markov boundaries, and evaluate or export the results.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use fansite_core::CoreError;

#[derive(Parser, Debug)]
#[command(name = "fansite", version, about = "Markov boundary discovery by conditional-entropy minimization")]
pub struct Cli {
    /// JSON config file with a flat key namespace mirroring the flags
    /// (snake_case keys); explicit flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print progress details to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample an Erdős–Rényi DAG and simulate a linear or GP SEM dataset.
    Generate(commands::GenerateArgs),
    /// Train the flow on a dataset and write a FANSv1 checkpoint.
    Train(commands::TrainArgs),
    /// Run the grow/shrink search for every variable.
    Discover(commands::DiscoverArgs),
    /// Score a predicted boundary file against a ground-truth DAG.
    Evaluate(commands::EvaluateArgs),
    /// Verify exact boundary recovery against brute-force enumeration.
    OracleCheck(commands::OracleCheckArgs),
    /// Export the moral-graph mask implied by a boundary file.
    Moral(commands::MoralArgs),
    /// Compute and verify the error-bound diagnostics for a run.
    Bounds(commands::BoundsArgs),
}

const EXIT_USAGE: i32 = 1;
const EXIT_NUMERIC: i32 = 2;
const EXIT_IO: i32 = 3;

fn exit_code_for(err: &CoreError) -> i32 {
    match err {
        CoreError::Io { .. } | CoreError::MalformedFile { .. } => EXIT_IO,
        CoreError::NotPositiveDefinite { .. }
        | CoreError::GramNotPd { .. }
        | CoreError::NonFiniteLoss { .. }
        | CoreError::TrainingDiverged { .. }
        | CoreError::DiscoveryFailed { .. }
        | CoreError::EnumerationTooLarge { .. } => EXIT_NUMERIC,
        CoreError::ScorerFailed { source, .. } => exit_code_for(source),
        _ => EXIT_USAGE,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are not usage errors.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let file_cfg = match config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code_for(&e));
        }
    };
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args, &file_cfg, cli.verbose),
        Command::Train(args) => commands::train(args, &file_cfg, cli.verbose),
        Command::Discover(args) => commands::discover(args, &file_cfg, cli.verbose),
        Command::Evaluate(args) => commands::evaluate(args, &file_cfg, cli.verbose),
        Command::OracleCheck(args) => commands::oracle_check(args, &file_cfg, cli.verbose),
        Command::Moral(args) => commands::moral(args, &file_cfg, cli.verbose),
        Command::Bounds(args) => commands::bounds(args, &file_cfg, cli.verbose),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code_for(&e));
    }
}
