//! Task-selection probabilities: uniform, or softmax of per-task gradient
//! norms at temperature η with a probability floor.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::softmax;

pub const DEFAULT_TEMPERATURE: f64 = 0.01;
pub const DEFAULT_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    #[default]
    Uniform,
    GradProp,
}

/// Whether each group draws its own task or the whole batch shares one draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    #[default]
    PerGroup,
    PerBatch,
}

pub fn uniform_probs(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::config("cannot sample from zero tasks"));
    }
    Ok(vec![1.0 / m as f64; m])
}

/// `softmax(norms / η)` followed by the floor procedure.
pub fn grad_prop_probs(norms: &[f64], temperature: f64, floor: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::config(format!("temperature must be positive, got {temperature}")));
    }
    check_floor(norms.len(), floor)?;
    if norms.iter().any(|n| !n.is_finite()) {
        return Err(Error::Numeric("non-finite task norm".into()));
    }
    let scaled: Vec<f64> = norms.iter().map(|n| n / temperature).collect();
    Ok(apply_floor(&softmax(&scaled), floor))
}

fn check_floor(m: usize, floor: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::config("cannot sample from zero tasks"));
    }
    if !(floor >= 0.0) || floor * m as f64 > 1.0 {
        return Err(Error::config(format!(
            "floor {floor} infeasible for {m} tasks (need 0 <= floor <= 1/M)"
        )));
    }
    Ok(())
}

/// Water-filling: entries below `floor` are pinned to it and the remaining
/// mass is shared among the free entries in proportion to their original
/// weights, repeating until no free entry falls below the floor.
pub fn apply_floor(probs: &[f64], floor: f64) -> Vec<f64> {
    let m = probs.len();
    let mut pinned = vec![false; m];
    loop {
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let free_mass = 1.0 - floor * n_pinned as f64;
        let free_weight: f64 = probs
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(w, _)| w)
            .sum();
        let out: Vec<f64> = probs
            .iter()
            .zip(&pinned)
            .map(|(&w, &p)| {
                if p {
                    floor
                } else if free_weight > 0.0 {
                    free_mass * w / free_weight
                } else {
                    free_mass / (m - n_pinned) as f64
                }
            })
            .collect();
        let mut changed = false;
        for i in 0..m {
            if !pinned[i] && out[i] < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed || pinned.iter().all(|&p| p) {
            return out;
        }
    }
}

/// Categorical draw over task indices.
pub fn sample_task<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty() || (total - 1.0).abs() > 1e-9 || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::contract(format!(
            "task probabilities must be nonnegative and sum to 1 (sum = {total})"
        )));
    }
    Ok(crate::grpo::sample_categorical(probs, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub mode: SamplerMode,
    pub task_ids: Vec<String>,
    pub norms: Vec<f64>,
    pub temperature: f64,
    pub floor: f64,
    pub probs: Vec<f64>,
    /// Reuse the previous norm for tasks missing from a refresh instead of failing.
    pub carry_forward: bool,
}

impl SamplerState {
    pub fn new(
        mode: SamplerMode,
        task_ids: Vec<String>,
        temperature: f64,
        floor: f64,
    ) -> Result<Self> {
        let m = task_ids.len();
        if mode == SamplerMode::GradProp {
            if m < 2 {
                return Err(Error::config("gradient-proportional sampling needs at least 2 tasks"));
            }
            if !(temperature > 0.0) {
                return Err(Error::config(format!("temperature must be positive, got {temperature}")));
            }
            check_floor(m, floor)?;
        }
        let norms = vec![0.0; m];
        let probs = uniform_probs(m)?;
        Ok(SamplerState {
            mode,
            task_ids,
            norms,
            temperature,
            floor,
            probs,
            carry_forward: false,
        })
    }

    pub fn with_carry_forward(mut self, on: bool) -> Self {
        self.carry_forward = on;
        self
    }

    pub fn prob_of(&self, task_id: &str) -> Option<f64> {
        self.task_ids
            .iter()
            .position(|t| t == task_id)
            .map(|i| self.probs[i])
    }

    /// Recomputes probabilities from the latest per-task (unsquared) norms.
    pub fn refresh(&self, new_norms: &BTreeMap<String, f64>) -> Result<SamplerState> {
        let mut next = self.clone();
        for (i, id) in self.task_ids.iter().enumerate() {
            match new_norms.get(id) {
                Some(&n) => next.norms[i] = n,
                None if self.carry_forward => {}
                None => {
                    return Err(Error::contract(format!("no norm supplied for task `{id}`")));
                }
            }
        }
        next.probs = match self.mode {
            SamplerMode::Uniform => uniform_probs(self.task_ids.len())?,
            SamplerMode::GradProp => grad_prop_probs(&next.norms, self.temperature, self.floor)?,
        };
        Ok(next)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        sample_task(&self.probs, rng)
    }
}
