//! Synthetic task families with three-tier verifiable rewards.
//!
//! When `format_trap` is set, the last action (`action_count - 1`) is the
//! "malformed" answer and earns nothing; correct labels then range over the
//! remaining actions. Contexts are drawn unscaled and multiplied by
//! `feature_scale` last, so the scale knob changes gradient magnitudes without
//! changing which action is correct.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REWARD_CORRECT: f64 = 1.0;
pub const REWARD_WRONG: f64 = 0.1;
pub const REWARD_MALFORMED: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// One-hot context at a random position; the label is the position mod the label count.
    ScaledBandit,
    /// ±1 bits; the label is the XOR of the first two bits.
    Parity,
    /// Two operands encoded in the first two coordinates, distractors elsewhere.
    ModularAdd,
    /// Like `ScaledBandit`, but difficulty adds Gaussian noise to the context
    /// instead of flipping labels.
    NoisyChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub family: Family,
    pub context_dim: usize,
    pub action_count: usize,
    #[serde(default = "one")]
    pub feature_scale: f64,
    #[serde(default)]
    pub difficulty: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub format_trap: bool,
    /// Upper bound on the logged per-instance padding count; 0 disables it.
    #[serde(default)]
    pub max_padding: u32,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub context: Vec<f64>,
    pub correct_action: usize,
    pub format_trap: bool,
    pub padding_len: u32,
}

impl TaskSpec {
    pub fn new(id: &str, family: Family, context_dim: usize, action_count: usize) -> Self {
        TaskSpec {
            id: id.to_string(),
            family,
            context_dim,
            action_count,
            feature_scale: 1.0,
            difficulty: 0.0,
            seed: 0,
            format_trap: true,
            max_padding: 0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.feature_scale = scale;
        self
    }

    pub fn with_difficulty(mut self, difficulty: f64) -> Self {
        self.difficulty = difficulty;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("task `{}`: {msg}", self.id)));
        if self.id.is_empty() {
            return Err(Error::config("task id must be nonempty"));
        }
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite()) {
            return bad(format!("feature_scale must be positive, got {}", self.feature_scale));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return bad(format!("difficulty must lie in [0, 1], got {}", self.difficulty));
        }
        if self.context_dim == 0 {
            return bad("context_dim must be positive".into());
        }
        if self.action_count < 2 {
            return bad("action_count must be at least 2".into());
        }
        if self.family == Family::ModularAdd && self.context_dim < 2 {
            return bad("modular_add needs context_dim >= 2".into());
        }
        Ok(())
    }

    /// Number of actions that can be correct answers.
    pub fn label_count(&self) -> usize {
        if self.format_trap {
            self.action_count - 1
        } else {
            self.action_count
        }
    }

    pub fn malformed_action(&self) -> Option<usize> {
        self.format_trap.then(|| self.action_count - 1)
    }

    /// Draws one instance. Deterministic in the state of `rng`.
    pub fn sample_instance<R: Rng + ?Sized>(&self, rng: &mut R) -> Instance {
        let d = self.context_dim;
        let labels = self.label_count();
        let mut context = vec![0.0; d];
        let mut label = match self.family {
            Family::ScaledBandit | Family::NoisyChannel => {
                let j = rng.random_range(0..d);
                context[j] = 1.0;
                j % labels
            }
            Family::Parity => {
                for c in context.iter_mut() {
                    *c = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
                parity_label(&context, labels)
            }
            Family::ModularAdd => {
                let x = rng.random_range(0..labels);
                let y = rng.random_range(0..labels);
                context[0] = encode_operand(x, labels);
                context[1] = encode_operand(y, labels);
                for c in context.iter_mut().skip(2) {
                    *c = rng.random_range(-1.0..1.0);
                }
                (x + y) % labels
            }
        };
        match self.family {
            Family::NoisyChannel => {
                if self.difficulty > 0.0 {
                    for c in context.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *c += self.difficulty * z;
                    }
                }
            }
            _ => {
                if self.difficulty > 0.0 && rng.random::<f64>() < self.difficulty {
                    label = rng.random_range(0..labels);
                }
            }
        }
        let padding_len = if self.max_padding > 0 {
            rng.random_range(0..=self.max_padding)
        } else {
            0
        };
        for c in context.iter_mut() {
            *c *= self.feature_scale;
        }
        Instance {
            context,
            correct_action: label,
            format_trap: self.format_trap,
            padding_len,
        }
    }

    /// The noiseless labelling rule applied to an emitted (scaled) context.
    pub fn derive_label(&self, context: &[f64]) -> usize {
        let labels = self.label_count();
        match self.family {
            Family::ScaledBandit | Family::NoisyChannel => argmax(context) % labels,
            Family::Parity => parity_label(context, labels),
            Family::ModularAdd => {
                let x = decode_operand(context[0] / self.feature_scale, labels);
                let y = decode_operand(context[1] / self.feature_scale, labels);
                (x + y) % labels
            }
        }
    }

    /// Three-tier reward: malformed 0.0, well-formed but wrong 0.1, correct 1.0.
    pub fn score(&self, instance: &Instance, action: usize) -> Result<f64> {
        if action >= self.action_count {
            return Err(Error::contract(format!(
                "action {action} out of range for task `{}` with {} actions",
                self.id, self.action_count
            )));
        }
        Ok(if instance.format_trap && action == self.action_count - 1 {
            REWARD_MALFORMED
        } else if action == instance.correct_action {
            REWARD_CORRECT
        } else {
            REWARD_WRONG
        })
    }
}

fn parity_label(context: &[f64], labels: usize) -> usize {
    let ones = context.iter().take(2).filter(|&&c| c > 0.0).count();
    (ones % 2) % labels
}

fn encode_operand(x: usize, labels: usize) -> f64 {
    (2.0 * x as f64 + 1.0) / labels as f64 - 1.0
}

fn decode_operand(v: f64, labels: usize) -> usize {
    let x = ((v + 1.0) * labels as f64 / 2.0).floor();
    (x.max(0.0) as usize).min(labels - 1)
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Four heterogeneous families.
    MultiDomainAnalog,
    /// Three `scaled_bandit` tasks ordered hard / medium / easy, the easy one
    /// with a 4x feature scale.
    SingleDomainAnalog,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi_domain_analog" => Ok(Preset::MultiDomainAnalog),
            "single_domain_analog" => Ok(Preset::SingleDomainAnalog),
            other => Err(Error::config(format!("unknown task preset `{other}`"))),
        }
    }
}

impl Preset {
    pub fn tasks(self, context_dim: usize, action_count: usize) -> Vec<TaskSpec> {
        let t = |id: &str, family| TaskSpec::new(id, family, context_dim, action_count);
        match self {
            Preset::MultiDomainAnalog => vec![
                t("bandit", Family::ScaledBandit).with_scale(3.0).with_difficulty(0.1),
                t("parity", Family::Parity),
                t("modadd", Family::ModularAdd).with_scale(0.5).with_difficulty(0.1),
                t("channel", Family::NoisyChannel).with_scale(2.0).with_difficulty(0.3),
            ],
            Preset::SingleDomainAnalog => vec![
                t("hard", Family::ScaledBandit).with_difficulty(0.5),
                t("medium", Family::ScaledBandit).with_difficulty(0.25),
                t("easy", Family::ScaledBandit).with_scale(4.0).with_difficulty(0.05),
            ],
        }
    }
}

/// Task section of an experiment config: a preset, explicit tasks, or both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSetConfig {
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub custom: Vec<TaskSpec>,
}

/// Expands presets and validates the resulting task list.
///
/// Preset tasks inherit `context_dim`/`action_count` from the caller. Every
/// task must share those dimensions, and ids must be unique.
pub fn task_registry(
    config: &TaskSetConfig,
    context_dim: usize,
    action_count: usize,
) -> Result<Vec<TaskSpec>> {
    let mut tasks = config
        .preset
        .map(|p| p.tasks(context_dim, action_count))
        .unwrap_or_default();
    tasks.extend(config.custom.iter().cloned());
    if tasks.is_empty() {
        return Err(Error::config("task list is empty"));
    }
    let mut seen = HashSet::new();
    for t in &tasks {
        t.validate()?;
        if !seen.insert(t.id.as_str()) {
            return Err(Error::config(format!("duplicate task id `{}`", t.id)));
        }
        if t.context_dim != context_dim || t.action_count != action_count {
            return Err(Error::config(format!(
                "task `{}` has dims ({}, {}) but the shared policy head expects ({context_dim}, {action_count})",
                t.id, t.context_dim, t.action_count
            )));
        }
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn all_families() -> [Family; 4] {
        [
            Family::ScaledBandit,
            Family::Parity,
            Family::ModularAdd,
            Family::NoisyChannel,
        ]
    }

    #[test]
    fn scale_is_exact_multiplier() {
        for fam in all_families() {
            let base = TaskSpec::new("t", fam, 6, 5).with_difficulty(0.3);
            let big = base.clone().with_scale(4.0);
            for i in 0..50 {
                let a = base.sample_instance(&mut seeded(i));
                let b = big.sample_instance(&mut seeded(i));
                assert_eq!(a.correct_action, b.correct_action);
                for (x, y) in a.context.iter().zip(&b.context) {
                    assert_eq!(4.0 * x, *y);
                }
            }
        }
    }

    #[test]
    fn noiseless_labels_are_rederivable() {
        for fam in all_families() {
            for scale in [1.0, 0.5, 3.0] {
                let task = TaskSpec::new("t", fam, 5, 4).with_scale(scale);
                let mut rng = seeded(3);
                for _ in 0..200 {
                    let inst = task.sample_instance(&mut rng);
                    assert_eq!(task.derive_label(&inst.context), inst.correct_action, "{fam:?}");
                    assert!(inst.correct_action < task.label_count());
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let task = TaskSpec::new("t", Family::NoisyChannel, 4, 3).with_difficulty(0.7);
        assert_eq!(
            task.sample_instance(&mut seeded(5)),
            task.sample_instance(&mut seeded(5))
        );
    }

    #[test]
    fn three_reward_tiers() {
        let task = TaskSpec::new("t", Family::ScaledBandit, 4, 4);
        let inst = Instance {
            context: vec![1.0, 0.0, 0.0, 0.0],
            correct_action: 0,
            format_trap: true,
            padding_len: 0,
        };
        assert_eq!(task.score(&inst, 0).unwrap(), 1.0);
        assert_eq!(task.score(&inst, 1).unwrap(), 0.1);
        assert_eq!(task.score(&inst, 3).unwrap(), 0.0);
        assert!(matches!(task.score(&inst, 4), Err(Error::Contract(_))));
    }

    #[test]
    fn presets() {
        let sd = Preset::SingleDomainAnalog.tasks(8, 4);
        assert_eq!(sd.len(), 3);
        assert!(sd.iter().all(|t| t.family == sd[0].family));
        let keys: HashSet<_> = sd
            .iter()
            .map(|t| (t.difficulty.to_bits(), t.feature_scale.to_bits()))
            .collect();
        assert_eq!(keys.len(), 3);
        let md = Preset::MultiDomainAnalog.tasks(8, 4);
        let fams: HashSet<_> = md.iter().map(|t| t.family).collect();
        assert_eq!((md.len(), fams.len()), (4, 4));
    }

    #[test]
    fn registry_validation() {
        assert!(matches!(
            task_registry(&TaskSetConfig::default(), 4, 3),
            Err(Error::Config(_))
        ));
        let t = TaskSpec::new("a", Family::Parity, 4, 3);
        let dup = TaskSetConfig {
            preset: None,
            custom: vec![t.clone(), t.clone()],
        };
        assert!(matches!(task_registry(&dup, 4, 3), Err(Error::Config(_))));
        let mismatch = TaskSetConfig {
            preset: None,
            custom: vec![t.clone(), TaskSpec::new("b", Family::Parity, 5, 3)],
        };
        assert!(task_registry(&mismatch, 4, 3).is_err());
        let bad = TaskSetConfig {
            preset: None,
            custom: vec![t.with_difficulty(1.5)],
        };
        assert!(task_registry(&bad, 4, 3).is_err());
        let both = TaskSetConfig {
            preset: Some(Preset::SingleDomainAnalog),
            custom: vec![TaskSpec::new("extra", Family::Parity, 4, 3)],
        };
        assert_eq!(task_registry(&both, 4, 3).unwrap().len(), 4);
    }
}
