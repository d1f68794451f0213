//! `densetact` — command line front end for the tactile sensor pipeline.
//!
//! Subcommands run the pipeline stages in order: `calibrate`,
//! `gen-dataset`, `train`, `predict`, `evaluate`. Artifacts live under
//! `DENSETACT_HOME` (default `./densetact-home`). Machine-readable events
//! go to stderr as one JSON object per line; the human summary goes to
//! stdout. Exit codes: 0 success, 1 runtime failure, 2 usage or
//! configuration error.

mod commands;
mod config;
mod context;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::CommandEnv;
use config::RunConfig;
use context::{emit, emit_config, home_dir};
use error::CliError;

#[derive(Parser)]
#[command(name = "densetact", version, about = "Vision-based tactile sensing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the pixel-to-surface correspondence and store the calibration.
    Calibrate(CommonArgs),
    /// Generate a synthetic press dataset from the stored calibration.
    GenDataset(CommonArgs),
    /// Train the depth reconstruction network on the generated dataset.
    Train(CommonArgs),
    /// Reconstruct depth and a point cloud from one sensor image.
    Predict(CommonArgs),
    /// Score test-split predictions or run the grasp registration fixture.
    Evaluate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the command's primary random seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Validate the configuration and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Calibrate(args) => ("calibrate", args),
        Command::GenDataset(args) => ("gen-dataset", args),
        Command::Train(args) => ("train", args),
        Command::Predict(args) => ("predict", args),
        Command::Evaluate(args) => ("evaluate", args),
    };
    match execute(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (module, operation, cause) = err.parts();
            emit(
                "error",
                json!({
                    "module": module,
                    "operation": operation,
                    "cause": cause,
                    "exit_code": err.code(),
                }),
            );
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}

fn execute(name: &str, args: &CommonArgs) -> Result<(), CliError> {
    let config = RunConfig::load(args.config.as_deref())?;
    config.validate()?;
    emit_config(&config);
    if args.dry_run {
        emit("dry_run", json!({ "command": name }));
        println!("dry run: configuration valid; nothing written");
        return Ok(());
    }
    let env = CommandEnv {
        home: home_dir(),
        config,
        seed: args.seed,
    };
    match name {
        "calibrate" => commands::calibrate(&env),
        "gen-dataset" => commands::gen_dataset(&env),
        "train" => commands::train_cmd(&env),
        "predict" => commands::predict_cmd(&env),
        "evaluate" => commands::evaluate_cmd(&env),
        other => unreachable!("unhandled subcommand {other}"),
    }
}
