use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use vitals_cli::commands::{self, EvalReport};
use vitals_cli::{exit_code, RunConfig, UsageError};
use vitals_core::data::Split;

#[derive(Parser)]
#[command(name = "vitals", version, about = "Camera-PPG heart-rate and SpO2 estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean RGB per .ppm frame, written as idx,r,g,b CSV
    Extract {
        frames_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model from a config file
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Test MAE of a trained model on its recorded split
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Dataset directory, if it moved since training
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Split manifest; defaults to split.txt beside the model
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-window estimates for a signal CSV, one JSON object per line
    Infer {
        #[arg(long)]
        model: PathBuf,
        signal: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and loss gradient
    Gradcheck {
        /// Scale analytic gradients by 1.1 so every item should fail
        #[arg(long, hide = true)]
        plant_fault: bool,
    },
    /// Test MAE for every architecture/loss pair
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Extract { frames_dir, out } => {
            let n = commands::extract(&frames_dir, &out)?;
            eprintln!("{n} frames -> {}", out.display());
        }
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = commands::train_run(&cfg)?;
            let h = &outcome.history;
            eprintln!(
                "trained {} epochs, best epoch {}, test mae {:.4} -> {}",
                h.train_loss.len(),
                h.best_epoch + 1,
                h.test_mae,
                cfg.require_out_dir()?.display()
            );
        }
        Command::Evaluate {
            model,
            dataset,
            split,
            manifest,
            out,
        } => {
            let split: Split = split
                .parse()
                .map_err(|e: vitals_core::Error| UsageError(e.to_string()))?;
            let report: EvalReport = commands::evaluate_run(&model, dataset.as_deref(), split, manifest.as_deref())?;
            emit(out.as_deref(), &format!("{}\n", serde_json::to_string(&report)?))?;
        }
        Command::Infer { model, signal, out } => {
            let mut text = String::new();
            for line in commands::infer(&model, &signal)? {
                text.push_str(&serde_json::to_string(&line)?);
                text.push('\n');
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Gradcheck { plant_fault } => {
            let items = commands::gradcheck(if plant_fault { 1.1 } else { 1.0 })?;
            print!("{}", commands::format_checks(&items));
            let failed = items.iter().filter(|i| !i.passed()).count();
            if failed > 0 {
                eprintln!("{failed} of {} gradient checks failed", items.len());
                return Ok(false);
            }
        }
        Command::Report { config, out, jobs } => {
            if jobs == 0 {
                return Err(UsageError("--jobs must be at least 1".into()).into());
            }
            let cfg = RunConfig::load(&config)?;
            emit(out.as_deref(), &commands::report(&cfg, jobs)?.to_csv())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
