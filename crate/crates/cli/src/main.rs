//! Command-line front end: build models, search binnings, solve and evaluate
//! policies, run sweeps and export POMDPs.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use adaptive_readout::Error;
use clap::{Parser, Subcommand};

use commands::{BinsArgs, BuildKind, EvalArgs, ExportArgs, SolveArgs, SweepArgs};

#[derive(Parser, Debug)]
#[command(name = "adaptive-readout", version, about = "Adaptive permutation readout of hidden Markov states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a model file.
    #[command(subcommand)]
    Build(BuildKind),
    /// Search consecutive output binnings.
    Bins(BinsArgs),
    /// Compute a policy.
    Solve(SolveArgs),
    /// Evaluate a policy's infidelity.
    Eval(EvalArgs),
    /// Evaluate several methods over a parameter grid (CSV).
    Sweep(SweepArgs),
    /// Write the finite-horizon POMDP in `.pomdp` text form.
    ExportPomdp(ExportArgs),
}

/// 2 for configuration problems, 3 when a work cap is hit, 4 for numeric
/// failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::WorkCapExceeded { .. } => 3,
                Error::Numeric(_) | Error::NonConvergence(_) | Error::PrunedBranch { .. } => 4,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(kind) => commands::build(kind),
        Command::Bins(args) => commands::bins(args),
        Command::Solve(args) => commands::solve(args),
        Command::Eval(args) => commands::eval(args),
        Command::Sweep(args) => commands::sweep_cmd(args),
        Command::ExportPomdp(args) => commands::export_pomdp(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let cap = anyhow::Error::from(Error::WorkCapExceeded {
            what: "x".into(),
            needed: 2.0,
            cap: 1.0,
        });
        assert_eq!(exit_code(&cap), 3);
        assert_eq!(exit_code(&anyhow::Error::from(Error::NonConvergence(40))), 4);
        let wrapped = anyhow::Error::from(Error::Numeric("nan".into())).context("solving");
        assert_eq!(exit_code(&wrapped), 4);
        assert_eq!(exit_code(&anyhow::anyhow!("missing file")), 2);
        assert_eq!(exit_code(&anyhow::Error::from(Error::EmptyActionSet)), 2);
    }
}
