use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grpo::TrainConfig;
use crate::policy::PolicySpec;
use crate::probe::{Subset, DEFAULT_EMA_COEFF};
use crate::scheduler::{Assignment, SamplerMode, DEFAULT_FLOOR, DEFAULT_TEMPERATURE};
use crate::tasks::{task_registry, Preset, TaskSetConfig, TaskSpec};

/// Whole-experiment configuration, read from a TOML document with one table
/// per section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub policy: PolicySpec,
    pub tasks: TaskSetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub checkpoint: CheckpointConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default)]
    pub mode: SamplerMode,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub assignment: Assignment,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: SamplerMode::Uniform,
            temperature: DEFAULT_TEMPERATURE,
            floor: DEFAULT_FLOOR,
            assignment: Assignment::PerGroup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// First `⌈n/2⌉` groups against the rest.
    #[default]
    Positional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_ema")]
    pub ema_coeff: f64,
    #[serde(default)]
    pub subset: Subset,
    #[serde(default)]
    pub split_rule: SplitRule,
}

fn default_ema() -> f64 {
    DEFAULT_EMA_COEFF
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            ema_coeff: DEFAULT_EMA_COEFF,
            subset: Subset::Last,
            split_rule: SplitRule::Positional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Gain window `s`; when absent, 75 for the multi-domain preset and 25
    /// otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_window: Option<usize>,
    #[serde(default = "default_points")]
    pub num_points: usize,
    #[serde(default = "default_norm_smoothing")]
    pub norm_smoothing: f64,
    #[serde(default = "default_reward_smoothing")]
    pub reward_smoothing: f64,
    #[serde(default = "default_length_smoothing")]
    pub length_smoothing: f64,
    #[serde(default = "default_dominance")]
    pub dominance_threshold: f64,
}

fn default_points() -> usize {
    3
}
fn default_norm_smoothing() -> f64 {
    0.9
}
fn default_reward_smoothing() -> f64 {
    0.7
}
fn default_length_smoothing() -> f64 {
    0.5
}
fn default_dominance() -> f64 {
    5.0
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            gain_window: None,
            num_points: default_points(),
            norm_smoothing: default_norm_smoothing(),
            reward_smoothing: default_reward_smoothing(),
            length_smoothing: default_length_smoothing(),
            dominance_threshold: default_dominance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    /// Save every `every` steps; 0 keeps only the final checkpoint.
    #[serde(default)]
    pub every: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<config>"),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    /// A ready-to-run config for one of the task presets.
    pub fn preset(preset: Preset) -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: None,
            policy: PolicySpec::linear(8, 4),
            tasks: TaskSetConfig {
                preset: Some(preset),
                custom: Vec::new(),
            },
            train: TrainConfig {
                learning_rate: 0.05,
                total_steps: match preset {
                    Preset::MultiDomainAnalog => 300,
                    Preset::SingleDomainAnalog => 100,
                },
                ..TrainConfig::default()
            },
            sampler: SamplerConfig::default(),
            probe: ProbeConfig::default(),
            metrics: MetricsConfig::default(),
            checkpoint: CheckpointConfig::default(),
        }
    }

    pub fn task_list(&self) -> Result<Vec<TaskSpec>> {
        task_registry(&self.tasks, self.policy.context_dim, self.policy.action_count)
    }

    pub fn gain_window(&self) -> usize {
        self.metrics.gain_window.unwrap_or(match self.tasks.preset {
            Some(Preset::MultiDomainAnalog) => 75,
            _ => 25,
        })
    }

    /// Checks every section before anything runs.
    pub fn validate(&self) -> Result<Vec<TaskSpec>> {
        self.policy.validate()?;
        self.train.validate()?;
        let tasks = self.task_list()?;
        let s = &self.sampler;
        if s.mode == SamplerMode::GradProp {
            if tasks.len() < 2 {
                return Err(Error::config("grad_prop sampling needs at least 2 tasks"));
            }
            if !(s.temperature > 0.0) {
                return Err(Error::config("sampler temperature must be positive"));
            }
            if !(s.floor >= 0.0) || s.floor * tasks.len() as f64 > 1.0 {
                return Err(Error::config(format!(
                    "sampler floor {} infeasible for {} tasks",
                    s.floor,
                    tasks.len()
                )));
            }
        }
        if !(0.0..1.0).contains(&self.probe.ema_coeff) {
            return Err(Error::config("probe ema_coeff must lie in [0, 1)"));
        }
        self.probe.subset.resolve(&self.policy.init_params()?)?;
        let m = &self.metrics;
        if self.gain_window() == 0 || m.num_points == 0 {
            return Err(Error::config("gain_window and num_points must be positive"));
        }
        for (name, c) in [
            ("norm_smoothing", m.norm_smoothing),
            ("reward_smoothing", m.reward_smoothing),
            ("length_smoothing", m.length_smoothing),
        ] {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(m.dominance_threshold > 0.0) {
            return Err(Error::config("dominance_threshold must be positive"));
        }
        Ok(tasks)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
