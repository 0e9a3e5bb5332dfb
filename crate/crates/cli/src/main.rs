//! `gpdm`: bandwidth tuning, forward errors, boundary-value solves, spectra and
//! convergence sweeps on built-in fixtures or point clouds read from disk.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpdm_core::GpdmError;
use serde_json::json;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "gpdm",
    version,
    about = "Ghost point diffusion maps experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan bandwidths and pick eps.
    Tune(Run),
    /// |L-hat u - L u| for a fixture, or a sweep over --sweep sizes.
    ForwardError(Run),
    /// Solve a boundary-value problem.
    Solve(Run),
    /// Leading eigenpairs under the fixture's boundary condition.
    Eigs(Run),
    /// Error against N with a fitted log-log slope.
    Convergence(Run),
}

#[derive(clap::Args)]
struct Run {
    /// JSON file with any of the flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ExperimentConfig,
}

type Action = fn(&ExperimentConfig) -> Result<serde_json::Value, GpdmError>;

const USAGE: u8 = 2;
const NUMERICAL: u8 = 3;

fn exit_code(e: &GpdmError) -> u8 {
    match e {
        GpdmError::InvalidArgument(_)
        | GpdmError::InvalidBc(_)
        | GpdmError::InvalidCoefficient { .. }
        | GpdmError::Parse(_)
        | GpdmError::Io(_) => USAGE,
        _ => NUMERICAL,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, run, action): (&str, Run, Action) = match cli.command {
        Command::Tune(r) => ("tune", r, commands::tune),
        Command::ForwardError(r) => ("forward_error", r, commands::forward_error_cmd),
        Command::Solve(r) => ("solve", r, commands::solve),
        Command::Eigs(r) => ("eigs", r, commands::eigs),
        Command::Convergence(r) => ("convergence", r, commands::convergence_cmd),
    };
    let cfg = match ExperimentConfig::resolve(&run.flags, run.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    let file = format!("{name}.json");
    match action(&cfg) {
        Ok(mut summary) => {
            summary["status"] = json!("ok");
            summary["config"] = serde_json::to_value(&cfg).expect("config serializes");
            if let Err(e) = commands::write_json(&cfg.out_dir(), &file, &summary) {
                eprintln!("error: {e}");
                return ExitCode::from(NUMERICAL);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code == NUMERICAL {
                let summary = json!({
                    "status": "failed",
                    "error": e.to_string(),
                    "config": serde_json::to_value(&cfg).expect("config serializes"),
                });
                if let Err(w) = commands::write_json(&cfg.out_dir(), &file, &summary) {
                    eprintln!("error: could not write {file}: {w}");
                }
            }
            ExitCode::from(code)
        }
    }
}
