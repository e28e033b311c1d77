//! Experiment runner: scene generation, pose/shape correction, correct-and-
//! certify self-training, and spectral degeneracy sweeps, all driven by
//! JSON configs and emitting CSV reports.
//!
//! Exit codes: 0 success, 1 numerical failure (also reported row-level),
//! 2 configuration error. Set `CRISP_LOG=info|debug` for progress output.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crisp_cli::commands;
use crisp_cli::config::ExperimentConfig;
use crisp_cli::logging;

#[derive(Parser)]
#[command(name = "crisp", version, about = "Pose/shape correction experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory with exact ground truth.
    GenScene {
        /// JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output scene directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scene seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Correct every object of a scene and write results.csv.
    Correct {
        /// Scene directory written by gen-scene.
        #[arg(long)]
        scene: PathBuf,
        /// Solver: "bcd" or "lsq".
        #[arg(long)]
        solver: String,
        /// JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Frame-level parallelism; 1 keeps runs byte-reproducible.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Overrides the perturbation seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Self-train the biased oracle estimator on a scene.
    Selftrain {
        #[arg(long)]
        scene: PathBuf,
        /// Number of self-training epochs.
        #[arg(long)]
        epochs: usize,
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path for the epoch log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum Gram eigenvalue per cumulative keyframe count.
    DegeneracySweep {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<(ExperimentConfig, Vec<u8>), String> {
    let raw = std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let cfg = ExperimentConfig::parse(&raw).map_err(|e| format!("config parse error: {e}"))?;
    Ok((cfg, raw))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenScene { config, out, seed } => match load_config(&config) {
            Ok((cfg, raw)) => commands::gen_scene(cfg, &raw, &out, seed),
            Err(e) => {
                logging::error(e);
                return ExitCode::from(2);
            }
        },
        Command::Correct { scene, solver, config, out, jobs, seed } => {
            let solver = match solver.as_str() {
                "bcd" => commands::Solver::Bcd,
                "lsq" => commands::Solver::Lsq,
                other => {
                    logging::error(format!("unknown solver {other:?}, expected bcd or lsq"));
                    return ExitCode::from(2);
                }
            };
            match load_config(&config) {
                Ok((cfg, raw)) => commands::correct(cfg, &raw, &scene, solver, &out, jobs, seed),
                Err(e) => {
                    logging::error(e);
                    return ExitCode::from(2);
                }
            }
        }
        Command::Selftrain { scene, epochs, config, out } => match load_config(&config) {
            Ok((cfg, raw)) => commands::selftrain(cfg, &raw, &scene, epochs, &out),
            Err(e) => {
                logging::error(e);
                return ExitCode::from(2);
            }
        },
        Command::DegeneracySweep { scene, config, out } => match load_config(&config) {
            Ok((cfg, raw)) => commands::degeneracy_sweep(cfg, &raw, &scene, &out),
            Err(e) => {
                logging::error(e);
                return ExitCode::from(2);
            }
        },
    };

    match outcome {
        Ok(outcome) if outcome.numerical_failures == 0 => ExitCode::SUCCESS,
        Ok(outcome) => {
            logging::error(format!("{} row(s) failed numerically", outcome.numerical_failures));
            ExitCode::from(1)
        }
        Err(crisp_core::Error::InvalidParameter(msg)) => {
            logging::error(format!("configuration error: {msg}"));
            ExitCode::from(2)
        }
        Err(crisp_core::Error::Json(e)) => {
            logging::error(format!("configuration error: {e}"));
            ExitCode::from(2)
        }
        Err(e) => {
            logging::error(format!("numerical failure: {e}"));
            ExitCode::from(1)
        }
    }
}
