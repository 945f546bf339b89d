use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::task_records;
use crate::probe::Subset;
use crate::scheduler::SamplerMode;

use super::checkpoint::write_atomic;
use super::config::ExperimentConfig;
use super::manifest::{RunManifest, RunStatus};
use super::run::{read_step_records, run, STEPS_FILE};

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SWEEP_FILE: &str = "sweep.json";

/// Grid of sampler settings (and optionally probe subsets) to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Gradient-proportional temperatures to try.
    #[serde(default)]
    pub temperatures: Vec<f64>,
    /// Adds one uniform-sampling run per subset/replicate.
    #[serde(default = "yes")]
    pub uniform_baseline: bool,
    /// Probe subsets to cross with the sampler points; empty keeps the config's.
    #[serde(default)]
    pub subsets: Vec<Subset>,
    /// Replicate `r` runs with seed `config.seed + r`.
    #[serde(default = "one")]
    pub replicates: u64,
}

fn yes() -> bool {
    true
}

fn one() -> u64 {
    1
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            temperatures: vec![0.1, 0.01, 0.001],
            uniform_baseline: true,
            subsets: Vec::new(),
            replicates: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub label: String,
    pub config: ExperimentConfig,
}

impl SweepGrid {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Expands the grid against a base config, in a fixed order.
    pub fn points(&self, base: &ExperimentConfig) -> Result<Vec<GridPoint>> {
        let mut samplers: Vec<(String, SamplerMode, f64)> = Vec::new();
        if self.uniform_baseline {
            samplers.push(("uniform".into(), SamplerMode::Uniform, base.sampler.temperature));
        }
        for &t in &self.temperatures {
            samplers.push((format!("eta_{t}"), SamplerMode::GradProp, t));
        }
        let subsets: Vec<Option<&Subset>> = if self.subsets.is_empty() {
            vec![None]
        } else {
            self.subsets.iter().map(Some).collect()
        };
        let mut out = Vec::new();
        for rep in 0..self.replicates {
            for subset in &subsets {
                for (name, mode, temp) in &samplers {
                    let mut cfg = base.clone();
                    cfg.sampler.mode = *mode;
                    cfg.sampler.temperature = *temp;
                    cfg.seed = base.seed.wrapping_add(rep);
                    let mut label = name.clone();
                    if let Some(s) = subset {
                        cfg.probe.subset = (*s).clone();
                        label.push_str(&format!("_subset_{}", subset_label(s)));
                    }
                    if self.replicates > 1 {
                        label.push_str(&format!("_rep{rep}"));
                    }
                    out.push(GridPoint { label, config: cfg });
                }
            }
        }
        if out.is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        Ok(out)
    }
}

fn subset_label(s: &Subset) -> String {
    match s {
        Subset::Last => "last".into(),
        Subset::All => "all".into(),
        Subset::Named(n) => n.join("+"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub run_dir: PathBuf,
    pub manifest: Option<RunManifest>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub entries: Vec<SweepEntry>,
    pub comparison: PathBuf,
}

/// Mean reward over the last `window` observations of a task.
pub fn final_reward(rewards: &[f64], window: usize) -> Option<f64> {
    if rewards.is_empty() {
        return None;
    }
    let tail = &rewards[rewards.len().saturating_sub(window.max(1))..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Runs every grid point into `out_root/<label>` and writes a comparison
/// table of final rewards. Failing points are recorded and skipped.
pub fn sweep(base: &ExperimentConfig, grid: &SweepGrid, out_root: &Path, workers: usize) -> Result<SweepOutcome> {
    let points = grid.points(base)?;
    fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let task_ids: Vec<String> = base.task_list()?.into_iter().map(|t| t.id).collect();

    let mut entries = Vec::new();
    let mut table = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run".to_string()];
    header.extend(task_ids.iter().cloned());
    header.push("avg".into());
    table.write_record(&header).expect("in-memory write");

    for point in points {
        let run_dir = out_root.join(&point.label);
        let result = run(&point.config, &run_dir, workers);
        let (manifest, error) = match result {
            Ok(m) => {
                let err = match &m.status {
                    RunStatus::Completed => None,
                    RunStatus::Aborted { reason } => Some(reason.clone()),
                };
                (Some(m), err)
            }
            Err(e) => (None, Some(e.to_string())),
        };
        if error.is_none() {
            let records = read_step_records(&run_dir.join(STEPS_FILE))?;
            let window = point.config.gain_window();
            let finals: Vec<Option<f64>> = task_ids
                .iter()
                .map(|id| {
                    let r: Vec<f64> = task_records(&records, id).iter().map(|r| r.reward_mean).collect();
                    final_reward(&r, window)
                })
                .collect();
            let present: Vec<f64> = finals.iter().flatten().copied().collect();
            let avg = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
            let mut row = vec![point.label.clone()];
            row.extend(finals.iter().map(fmt_cell));
            row.push(fmt_cell(&avg));
            table.write_record(&row).expect("in-memory write");
        }
        entries.push(SweepEntry {
            label: point.label,
            run_dir,
            manifest,
            error,
        });
    }

    let comparison = out_root.join(COMPARISON_FILE);
    let bytes = table.into_inner().map_err(|e| Error::io(&comparison, e.into_error()))?;
    write_atomic(&comparison, &bytes)?;
    let outcome = SweepOutcome {
        entries,
        comparison,
    };
    write_atomic(
        &out_root.join(SWEEP_FILE),
        &serde_json::to_vec_pretty(&outcome).expect("sweep serializes"),
    )?;
    Ok(outcome)
}

fn fmt_cell(v: &Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
