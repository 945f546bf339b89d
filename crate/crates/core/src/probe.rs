//! Per-task squared-gradient-norm estimation.
//!
//! The batch is split into two halves whose mean gradients are independent,
//! so their inner product is an unbiased estimate of `‖g‖²`. The squared norm
//! of the full-batch mean overshoots by `Tr(Σ)/B` and is kept only for
//! comparison. Estimates are smoothed with an EMA and reported unsquared as
//! `sqrt(max(ema, 0))`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grpo::{policy_gradient, RolloutGroup};
use crate::params::ParamVector;
use crate::policy::PolicySpec;

pub const DEFAULT_EMA_COEFF: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradNormEstimate {
    pub task_id: String,
    /// This step's cross product; may be negative.
    pub raw_cross: f64,
    pub sq_norm_ema: f64,
    pub norm: f64,
    pub step: u64,
    pub subset: Vec<String>,
}

/// Splits by position into halves of sizes `⌈n/2⌉` and `⌊n/2⌋`.
pub fn split_halves<T>(items: &[T]) -> Result<(&[T], &[T])> {
    if items.len() < 2 {
        return Err(Error::contract(format!(
            "need at least 2 groups to split, got {}",
            items.len()
        )));
    }
    Ok(items.split_at(items.len().div_ceil(2)))
}

/// `⟨ĝ₁, ĝ₂⟩`, unbiased for `‖g‖²` when the halves are independent.
pub fn cross_product_sqnorm(g1: &ParamVector, g2: &ParamVector) -> Result<f64> {
    check_len("half-batch gradient", g1.len(), g2.len())?;
    g1.dot(g2)
}

/// `‖ĝ‖²` of the full-batch mean; biased upward by `Tr(Σ)/B`.
pub fn naive_sqnorm(g_hat: &ParamVector) -> f64 {
    g_hat.sq_norm()
}

pub fn unsquared_norm(sq_estimate: f64) -> f64 {
    sq_estimate.max(0.0).sqrt()
}

fn check_coeff(coeff: f64) -> Result<()> {
    if (0.0..1.0).contains(&coeff) {
        Ok(())
    } else {
        Err(Error::config(format!("EMA coefficient must lie in [0, 1), got {coeff}")))
    }
}

/// One EMA step; `prev = None` means this is the first observation.
pub fn ema_update(prev: Option<f64>, value: f64, coeff: f64) -> Result<f64> {
    check_coeff(coeff)?;
    Ok(match prev {
        None => value,
        Some(p) => coeff * p + (1.0 - coeff) * value,
    })
}

/// Which part of the parameter vector the probe looks at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    /// The model's final segment.
    #[default]
    Last,
    All,
    Named(Vec<String>),
}

impl Subset {
    pub fn resolve(&self, template: &ParamVector) -> Result<Vec<String>> {
        let names: Vec<String> = match self {
            Subset::Last => vec![template
                .last_segment()
                .ok_or_else(|| Error::config("parameter vector has no segments"))?
                .name
                .clone()],
            Subset::All => template.segments().iter().map(|s| s.name.clone()).collect(),
            Subset::Named(n) => n.clone(),
        };
        for n in &names {
            if template.segment(n).is_none() {
                return Err(Error::config(format!("unknown parameter segment `{n}`")));
            }
        }
        Ok(names)
    }
}

/// Restricts `grad` to the named segments, keeping their layout.
pub fn subset_gradient(grad: &ParamVector, subset: &[String]) -> Result<ParamVector> {
    if subset.is_empty() {
        return Err(Error::config("empty segment subset"));
    }
    let mut values = Vec::new();
    let mut layout = Vec::new();
    for name in subset {
        let vals = grad
            .segment_values(name)
            .ok_or_else(|| Error::config(format!("unknown parameter segment `{name}`")))?;
        values.extend_from_slice(vals);
        layout.push((name.as_str(), vals.len()));
    }
    ParamVector::new(values, &layout)
}

/// Cross-product estimate for one task's groups at one step, on `subset`.
pub fn estimate_sqnorm(
    policy: &PolicySpec,
    params: &ParamVector,
    groups: &[RolloutGroup],
    subset: &[String],
) -> Result<f64> {
    let (h1, h2) = split_halves(groups)?;
    let g1 = subset_gradient(&policy_gradient(policy, params, h1)?, subset)?;
    let g2 = subset_gradient(&policy_gradient(policy, params, h2)?, subset)?;
    cross_product_sqnorm(&g1, &g2)
}

/// Per-task EMA registry; single writer, cheap to clone for snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct NormTracker {
    coeff: f64,
    ema: BTreeMap<String, f64>,
}

impl NormTracker {
    pub fn new(coeff: f64) -> Result<Self> {
        check_coeff(coeff)?;
        Ok(NormTracker {
            coeff,
            ema: BTreeMap::new(),
        })
    }

    pub fn observe(&mut self, task_id: &str, raw_cross: f64) -> Result<f64> {
        let next = ema_update(self.ema.get(task_id).copied(), raw_cross, self.coeff)?;
        if !next.is_finite() {
            return Err(Error::Numeric(format!("non-finite norm EMA for `{task_id}`")));
        }
        self.ema.insert(task_id.to_string(), next);
        Ok(next)
    }

    pub fn sq_norm(&self, task_id: &str) -> Option<f64> {
        self.ema.get(task_id).copied()
    }

    pub fn norm(&self, task_id: &str) -> Option<f64> {
        self.sq_norm(task_id).map(unsquared_norm)
    }
}
