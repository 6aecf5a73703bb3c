//! `musgconv` — convert symbolic music into heterogeneous score graphs,
//! train the graph encoder on desk-scale tasks, and verify its gradients.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numeric failure (diverged training or failed gradient check).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use musgconv_core::Error;

use commands::Task;
use config::Settings;

#[derive(Parser)]
#[command(name = "musgconv", version, about = "Score graphs with edge-feature graph convolutions")]
struct Cli {
    /// Settings file with one key=value per line (# starts a comment)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Random seed; overrides the `seed` setting
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Compute in double precision instead of single
    #[arg(long = "f64", global = true)]
    use_f64: bool,

    /// Override one setting; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a MIDI file or note table and write the canonical note table
    Ingest {
        input: PathBuf,
        /// Output file; stdout when absent
        #[arg(short, long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Build the typed relation graph for one piece and dump it as text
    BuildGraph {
        input: PathBuf,
        /// Output file; stdout when absent
        #[arg(short, long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Generate a deterministic synthetic dataset of note tables
    Synth {
        /// Directory for the generated .notes files
        #[arg(short, long, value_name = "DIR")]
        output: PathBuf,
    },
    /// Train on a dataset and keep the best-validation checkpoint
    Train {
        #[arg(long, value_enum)]
        task: Task,
        /// Directory of training .notes files
        #[arg(long, value_name = "DIR")]
        train_dir: PathBuf,
        /// Directory of validation .notes files
        #[arg(long, value_name = "DIR")]
        val_dir: Option<PathBuf>,
        /// Where to write the best parameters
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Where to write the per-epoch metrics log
        #[arg(long, value_name = "PATH")]
        metrics: Option<PathBuf>,
    },
    /// Score a dataset with a trained checkpoint
    Evaluate {
        #[arg(long, value_enum)]
        task: Task,
        /// Directory of .notes files to score
        #[arg(long, value_name = "DIR")]
        data_dir: PathBuf,
        /// Checkpoint written by `train`
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Where to write per-pair or per-piece predictions
        #[arg(long, value_name = "PATH")]
        predictions: Option<PathBuf>,
    },
    /// Verify analytic gradients against finite differences (always double
    /// precision)
    Gradcheck,
}

fn run(cli: Cli) -> musgconv_core::Result<()> {
    let settings = Settings::load(cli.config.as_deref(), &cli.set, cli.seed)?;
    for line in settings.render().lines() {
        eprintln!("settings: {line}");
    }
    match cli.command {
        Command::Ingest { input, output } => commands::ingest(&input, output.as_deref()),
        Command::BuildGraph { input, output } => {
            commands::build_graph_cmd(&input, output.as_deref())
        }
        Command::Synth { output } => commands::synth(&settings, &output),
        Command::Train {
            task,
            train_dir,
            val_dir,
            checkpoint,
            metrics,
        } => {
            let args = (
                &settings,
                task,
                train_dir.as_path(),
                val_dir.as_deref(),
                checkpoint.as_deref(),
                metrics.as_deref(),
            );
            if cli.use_f64 {
                commands::train::<f64>(args.0, args.1, args.2, args.3, args.4, args.5)
            } else {
                commands::train::<f32>(args.0, args.1, args.2, args.3, args.4, args.5)
            }
        }
        Command::Evaluate {
            task,
            data_dir,
            checkpoint,
            predictions,
        } => {
            if cli.use_f64 {
                commands::evaluate::<f64>(
                    &settings,
                    task,
                    &data_dir,
                    &checkpoint,
                    predictions.as_deref(),
                )
            } else {
                commands::evaluate::<f32>(
                    &settings,
                    task,
                    &data_dir,
                    &checkpoint,
                    predictions.as_deref(),
                )
            }
        }
        Command::Gradcheck => commands::gradcheck(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
