use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    correlation_report, dominance_report, gain_report, mean_sq_norms, median, GainReport, StepRecord,
};

use super::checkpoint::{save_checkpoint, write_atomic};
use super::config::ExperimentConfig;
use super::manifest::{RunManifest, RunStatus};
use super::trainer::Trainer;

pub const STEPS_FILE: &str = "steps.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const GAINS_FILE: &str = "gain_report.json";
pub const CORRELATION_FILE: &str = "correlation_report.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "GRADLENS_OUT";

/// Output directory precedence: explicit override, then `GRADLENS_OUT`, then
/// the config's `output_dir`, then `./gradlens-out`.
pub fn resolve_out_dir(explicit: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("gradlens-out"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReports {
    pub window: usize,
    pub reports: Vec<GainReport>,
    /// Tasks whose series was too short, with the reason.
    pub skipped: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub mean_sq_norms: BTreeMap<String, f64>,
    pub median_sq_norm: Option<f64>,
    pub dominance_threshold: f64,
    pub dominant_tasks: BTreeSet<String>,
}

pub fn gain_reports(config: &ExperimentConfig, task_ids: &[String], records: &[StepRecord]) -> GainReports {
    let s = config.gain_window();
    let mut reports = Vec::new();
    let mut skipped = BTreeMap::new();
    for id in task_ids {
        match gain_report(records, id, s, config.metrics.num_points) {
            Ok(r) => reports.push(r),
            Err(e) => {
                skipped.insert(id.clone(), e.to_string());
            }
        }
    }
    GainReports {
        window: s,
        reports,
        skipped,
    }
}

pub fn summarize(config: &ExperimentConfig, steps: u64, records: &[StepRecord]) -> Result<RunSummary> {
    let means = mean_sq_norms(records);
    let values: Vec<f64> = means.values().copied().collect();
    Ok(RunSummary {
        steps,
        median_sq_norm: median(&values),
        dominance_threshold: config.metrics.dominance_threshold,
        dominant_tasks: dominance_report(records, config.metrics.dominance_threshold)?,
        mean_sq_norms: means,
    })
}

pub fn read_step_records(path: &Path) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != crate::metrics::STEP_CSV_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!("unexpected header `{header}`"),
        });
    }
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_vec_pretty(value).expect("report serializes");
    write_atomic(path, &text)
}

struct StepWriter {
    partial: PathBuf,
    final_path: PathBuf,
    inner: csv::Writer<File>,
}

impl StepWriter {
    fn create(run_dir: &Path) -> Result<Self> {
        let final_path = run_dir.join(STEPS_FILE);
        let partial = run_dir.join(format!("{STEPS_FILE}.partial"));
        let mut file = File::create(&partial).map_err(|e| Error::io(&partial, e))?;
        writeln!(file, "{}", crate::metrics::STEP_CSV_HEADER).map_err(|e| Error::io(&partial, e))?;
        let inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        Ok(StepWriter {
            partial,
            final_path,
            inner,
        })
    }

    fn append(&mut self, records: &[StepRecord]) -> Result<()> {
        for r in records {
            self.inner.serialize(r).map_err(|e| csv_err(&self.partial, e))?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.inner.flush().map_err(|e| Error::io(&self.partial, e))?;
        drop(self.inner);
        fs::rename(&self.partial, &self.final_path).map_err(|e| Error::io(&self.final_path, e))?;
        Ok(self.final_path)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            msg: format!("{other:?}"),
        },
    }
}

/// Executes a full training run and writes its artifacts into `run_dir`.
///
/// A numeric failure stops the loop; everything written up to the last good
/// step (including the newest checkpoint) is kept and the manifest is marked
/// aborted. I/O failures return an error after writing whatever manifest
/// can still be written.
pub fn run(config: &ExperimentConfig, run_dir: &Path, workers: usize) -> Result<RunManifest> {
    let mut trainer = Trainer::new(config, workers)?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut manifest = RunManifest::new(config.hash(), config.seed);
    match run_inner(config, run_dir, &mut trainer, &mut manifest) {
        Ok(()) => {
            manifest.write(run_dir)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = RunStatus::Aborted {
                reason: e.to_string(),
            };
            let _ = manifest.write(run_dir);
            Err(e)
        }
    }
}

fn run_inner(
    config: &ExperimentConfig,
    run_dir: &Path,
    trainer: &mut Trainer,
    manifest: &mut RunManifest,
) -> Result<()> {
    let config_path = run_dir.join(CONFIG_FILE);
    write_atomic(&config_path, config.to_toml_string()?.as_bytes())?;
    manifest.add_file(run_dir, &config_path)?;

    let ckpt_dir = run_dir.join(CHECKPOINT_DIR);
    let (bin, json) = save_checkpoint(&ckpt_dir, 0, trainer.params())?;
    manifest.add_file(run_dir, &bin)?;
    manifest.add_file(run_dir, &json)?;

    let mut writer = StepWriter::create(run_dir)?;
    let mut records = Vec::new();
    let every = config.checkpoint.every;
    let mut last_ckpt = 0u64;
    let mut failure = None;
    while !trainer.is_finished() {
        match trainer.step() {
            Ok(outcome) => {
                writer.append(&outcome.records)?;
                records.extend(outcome.records);
            }
            Err(e @ (Error::Numeric(_) | Error::Contract(_))) => {
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
        let done = trainer.steps_done();
        if every > 0 && done % every as u64 == 0 {
            let (bin, json) = save_checkpoint(&ckpt_dir, done, trainer.params())?;
            manifest.add_file(run_dir, &bin)?;
            manifest.add_file(run_dir, &json)?;
            last_ckpt = done;
        }
    }
    let done = trainer.steps_done();
    if failure.is_none() && last_ckpt != done {
        let (bin, json) = save_checkpoint(&ckpt_dir, done, trainer.params())?;
        manifest.add_file(run_dir, &bin)?;
        manifest.add_file(run_dir, &json)?;
    }
    let steps_path = writer.finish()?;
    manifest.add_file(run_dir, &steps_path)?;
    manifest.end_step = done;

    let ids: Vec<String> = trainer.tasks().iter().map(|t| t.id.clone()).collect();
    let gains_path = run_dir.join(GAINS_FILE);
    write_json(&gains_path, &gain_reports(config, &ids, &records))?;
    manifest.add_file(run_dir, &gains_path)?;

    let corr_path = run_dir.join(CORRELATION_FILE);
    write_json(&corr_path, &correlation_report(&records))?;
    manifest.add_file(run_dir, &corr_path)?;

    let summary_path = run_dir.join(SUMMARY_FILE);
    write_json(&summary_path, &summarize(config, done, &records)?)?;
    manifest.add_file(run_dir, &summary_path)?;

    if let Some(reason) = failure {
        manifest.status = RunStatus::Aborted { reason };
    }
    Ok(())
}
