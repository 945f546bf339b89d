use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradlens::harness::{self, ExperimentConfig, ExportFormat, RunStatus, Suite, SweepGrid};

#[derive(Parser)]
#[command(name = "gradlens", version, about = "Gradient-imbalance experiments on synthetic multi-task suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train once and write telemetry, checkpoints and reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to $GRADLENS_OUT, then the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run a sampler-temperature grid and write a comparison table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run a built-in property suite: estimator, convex, gradients or sampler.
    Validate {
        #[arg(long)]
        suite: String,
    },
    /// Re-emit a run's step records as csv or jsonl.
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                gradlens::Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cmd: Command) -> gradlens::Result<ExitCode> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = harness::resolve_out_dir(out.as_deref(), &cfg);
            let manifest = harness::run(&cfg, &dir, workers)?;
            println!("{}", dir.display());
            match manifest.status {
                RunStatus::Completed => Ok(ExitCode::SUCCESS),
                RunStatus::Aborted { reason } => {
                    eprintln!("run aborted after {} steps: {reason}", manifest.end_step);
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Sweep {
            config,
            grid,
            out,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let grid = match grid {
                Some(p) => SweepGrid::load(&p)?,
                None => SweepGrid::default(),
            };
            let dir = harness::resolve_out_dir(out.as_deref(), &cfg);
            let outcome = harness::sweep(&cfg, &grid, &dir, workers)?;
            for e in &outcome.entries {
                match &e.error {
                    None => println!("ok     {}", e.label),
                    Some(err) => println!("failed {}: {err}", e.label),
                }
            }
            println!("{}", outcome.comparison.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { suite } => {
            let suite: Suite = suite.parse()?;
            let report = harness::validate(suite);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Export { run, format, out } => {
            let format: ExportFormat = format.parse()?;
            match out {
                Some(p) => {
                    let f = File::create(&p).map_err(|e| gradlens::Error::Io { path: p.clone(), source: e })?;
                    harness::export(&run, format, BufWriter::new(f))?
                }
                None => harness::export(&run, format, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
