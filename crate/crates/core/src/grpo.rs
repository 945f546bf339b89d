//! Group rollouts, group-relative advantages, and the on-policy update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::params::{pairwise_sum, ParamVector};
use crate::policy::PolicySpec;
use crate::tasks::{Instance, TaskSpec};

/// Added to the group standard deviation before dividing.
pub const ADV_EPS: f64 = 1e-8;

/// Optimisation settings. Config keys follow the usual GRPO hyperparameter
/// table names (`rollouts_per_prompt`, `kl_coefficient`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(rename = "rollouts_per_prompt", default = "defaults::group_size")]
    pub group_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(rename = "kl_coefficient", default = "defaults::coeff")]
    pub kl_coeff: f64,
    #[serde(rename = "entropy_coefficient", default = "defaults::coeff")]
    pub entropy_coeff: f64,
    #[serde(default = "defaults::grad_clip")]
    pub grad_clip: f64,
    /// Kept for completeness; with one on-policy step per batch the
    /// importance ratio is exactly 1 and clipping never binds.
    #[serde(default = "defaults::clip_ratio")]
    pub clip_ratio: f64,
    #[serde(default = "defaults::total_steps")]
    pub total_steps: usize,
}

mod defaults {
    pub fn batch_size() -> usize {
        128
    }
    pub fn group_size() -> usize {
        16
    }
    pub fn learning_rate() -> f64 {
        5e-7
    }
    pub fn coeff() -> f64 {
        1e-3
    }
    pub fn grad_clip() -> f64 {
        1.0
    }
    pub fn clip_ratio() -> f64 {
        0.2
    }
    pub fn total_steps() -> usize {
        100
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: defaults::batch_size(),
            group_size: defaults::group_size(),
            learning_rate: defaults::learning_rate(),
            kl_coeff: defaults::coeff(),
            entropy_coeff: defaults::coeff(),
            grad_clip: defaults::grad_clip(),
            clip_ratio: defaults::clip_ratio(),
            total_steps: defaults::total_steps(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::config("rollouts_per_prompt must be at least 2"));
        }
        if self.batch_size == 0 || self.batch_size % self.group_size != 0 {
            return Err(Error::config(format!(
                "batch_size {} must be a positive multiple of rollouts_per_prompt {}",
                self.batch_size, self.group_size
            )));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("grad_clip", self.grad_clip),
            ("clip_ratio", self.clip_ratio),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("kl_coefficient", self.kl_coeff),
            ("entropy_coefficient", self.entropy_coeff),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be positive"));
        }
        Ok(())
    }

    pub fn groups_per_batch(&self) -> usize {
        self.batch_size / self.group_size
    }
}

/// One instance with `G` sampled responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub task_id: String,
    pub instance: Instance,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Set once [`RolloutGroup::normalize`] has filled `advantages`.
    pub normalized: bool,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn normalize(&mut self) -> Result<()> {
        self.advantages = group_advantages(&self.rewards)?;
        self.normalized = true;
        Ok(())
    }

    pub fn reward_mean(&self) -> f64 {
        mean(&self.rewards)
    }

    pub fn abs_adv_mean(&self) -> f64 {
        self.advantages.iter().map(|a| a.abs()).sum::<f64>() / self.len() as f64
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Inverse-CDF categorical draw; the final bucket absorbs rounding slack.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Samples `group_size` actions i.i.d. from the policy on a given instance.
pub fn rollout_on<R: Rng + ?Sized>(
    policy: &PolicySpec,
    params: &ParamVector,
    task: &TaskSpec,
    instance: Instance,
    group_size: usize,
    rng: &mut R,
) -> Result<RolloutGroup> {
    if group_size < 2 {
        return Err(Error::contract(format!(
            "group size must be at least 2, got {group_size}"
        )));
    }
    let log_pi = policy.log_probs(params, &instance.context)?;
    let probs: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
    let mut actions = Vec::with_capacity(group_size);
    let mut rewards = Vec::with_capacity(group_size);
    let mut log_probs = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let a = sample_categorical(&probs, rng);
        rewards.push(task.score(&instance, a)?);
        log_probs.push(log_pi[a]);
        actions.push(a);
    }
    Ok(RolloutGroup {
        task_id: task.id.clone(),
        instance,
        actions,
        rewards,
        log_probs,
        advantages: vec![0.0; group_size],
        normalized: false,
    })
}

/// Draws a fresh instance from `rng`, then rolls out `group_size` responses.
pub fn rollout_group<R: Rng + ?Sized>(
    policy: &PolicySpec,
    params: &ParamVector,
    task: &TaskSpec,
    group_size: usize,
    rng: &mut R,
) -> Result<RolloutGroup> {
    if group_size < 2 {
        return Err(Error::contract(format!(
            "group size must be at least 2, got {group_size}"
        )));
    }
    let instance = task.sample_instance(rng);
    rollout_on(policy, params, task, instance, group_size, rng)
}

/// `(r - mean) / (population_std + ε)`, or all zeros when every reward is equal.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::contract("a group needs at least 2 rewards"));
    }
    let first = rewards[0];
    if rewards.iter().all(|&r| r == first) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let m = mean(rewards);
    let var = rewards.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / rewards.len() as f64;
    let denom = var.sqrt() + ADV_EPS;
    Ok(rewards.iter().map(|r| (r - m) / denom).collect())
}

/// Coefficients of the surrogate objective; the probe uses the pure
/// policy-gradient part (both zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizers {
    pub entropy_coeff: f64,
    pub kl_coeff: f64,
}

impl Regularizers {
    pub const NONE: Regularizers = Regularizers {
        entropy_coeff: 0.0,
        kl_coeff: 0.0,
    };
}

impl From<&TrainConfig> for Regularizers {
    fn from(c: &TrainConfig) -> Self {
        Regularizers {
            entropy_coeff: c.entropy_coeff,
            kl_coeff: c.kl_coeff,
        }
    }
}

fn check_groups(groups: &[RolloutGroup]) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::contract("no rollout groups"));
    }
    if let Some(g) = groups.iter().find(|g| !g.normalized) {
        return Err(Error::contract(format!(
            "group for task `{}` has unfilled advantages",
            g.task_id
        )));
    }
    Ok(())
}

/// Ascent gradient of one group, averaged over its rollouts.
pub fn group_gradient(
    policy: &PolicySpec,
    params: &ParamVector,
    group: &RolloutGroup,
    ref_params: &ParamVector,
    reg: Regularizers,
) -> Result<ParamVector> {
    check_groups(std::slice::from_ref(group))?;
    let ctx = &group.instance.context;
    let log_p = policy.log_probs(params, ctx)?;
    let p: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
    let k = p.len();
    let n = group.len() as f64;

    // Score-function term in logit space: mean_i A_i (onehot(a_i) - p).
    let mut dz = vec![0.0; k];
    let adv_sum: f64 = group.advantages.iter().sum();
    for (&a, &adv) in group.actions.iter().zip(&group.advantages) {
        dz[a] += adv / n;
    }
    for (d, pk) in dz.iter_mut().zip(&p) {
        *d -= pk * adv_sum / n;
    }

    if reg.entropy_coeff != 0.0 {
        let h = entropy(&p, &log_p);
        for i in 0..k {
            dz[i] += reg.entropy_coeff * (-p[i] * (log_p[i] + h));
        }
    }
    if reg.kl_coeff != 0.0 {
        let log_q = policy.log_probs(ref_params, ctx)?;
        let kl = kl_divergence(&p, &log_p, &log_q);
        for i in 0..k {
            dz[i] -= reg.kl_coeff * p[i] * ((log_p[i] - log_q[i]) - kl);
        }
    }
    policy.backprop_logits(params, ctx, &dz)
}

fn entropy(p: &[f64], log_p: &[f64]) -> f64 {
    -p.iter().zip(log_p).map(|(a, b)| a * b).sum::<f64>()
}

fn kl_divergence(p: &[f64], log_p: &[f64], log_q: &[f64]) -> f64 {
    p.iter()
        .zip(log_p.iter().zip(log_q))
        .map(|(pi, (lp, lq))| pi * (lp - lq))
        .sum()
}

/// Mean over every (group, rollout) pair of the per-rollout ascent direction
/// `A ∇log π + c_H ∇H - c_KL ∇KL(π ‖ π_ref)`.
pub fn batch_gradient(
    policy: &PolicySpec,
    params: &ParamVector,
    groups: &[RolloutGroup],
    ref_params: &ParamVector,
    reg: Regularizers,
) -> Result<ParamVector> {
    check_groups(groups)?;
    let per_group = groups
        .iter()
        .map(|g| group_gradient(policy, params, g, ref_params, reg))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = groups.iter().map(RolloutGroup::len).collect();
    combine_group_gradients(per_group, &sizes)
}

/// Weights per-group mean gradients by group size and sums them in a fixed
/// pairwise order. Callers may compute `per_group` in parallel.
pub fn combine_group_gradients(per_group: Vec<ParamVector>, sizes: &[usize]) -> Result<ParamVector> {
    check_len("group sizes", per_group.len(), sizes.len())?;
    if per_group.is_empty() {
        return Err(Error::contract("no rollout groups"));
    }
    let total: usize = sizes.iter().sum();
    let weighted: Vec<ParamVector> = per_group
        .into_iter()
        .zip(sizes)
        .map(|(g, &n)| g.scaled(n as f64 / total as f64))
        .collect();
    Ok(pairwise_sum(&weighted)?.expect("nonempty"))
}

/// `A ∇log π` only; the quantity whose norm the probe tracks.
pub fn policy_gradient(
    policy: &PolicySpec,
    params: &ParamVector,
    groups: &[RolloutGroup],
) -> Result<ParamVector> {
    batch_gradient(policy, params, groups, params, Regularizers::NONE)
}

/// The objective whose gradient [`batch_gradient`] returns, with advantages and
/// actions frozen. Used as a finite-difference oracle.
pub fn surrogate_objective(
    policy: &PolicySpec,
    params: &ParamVector,
    groups: &[RolloutGroup],
    ref_params: &ParamVector,
    reg: Regularizers,
) -> Result<f64> {
    check_groups(groups)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for g in groups {
        let log_p = policy.log_probs(params, &g.instance.context)?;
        let p: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
        let mut per_rollout = reg.entropy_coeff * entropy(&p, &log_p);
        if reg.kl_coeff != 0.0 {
            let log_q = policy.log_probs(ref_params, &g.instance.context)?;
            per_rollout -= reg.kl_coeff * kl_divergence(&p, &log_p, &log_q);
        }
        for (&a, &adv) in g.actions.iter().zip(&g.advantages) {
            total += adv * log_p[a] + per_rollout;
        }
        n += g.len();
    }
    Ok(total / n as f64)
}

/// Uniform task mixture `(1/M) Σ g_i`.
pub fn mixture_gradient(per_task: &[ParamVector]) -> Result<ParamVector> {
    let first = per_task
        .first()
        .ok_or_else(|| Error::contract("mixture of zero gradients"))?;
    for g in per_task {
        check_len("mixture operand", first.len(), g.len())?;
    }
    let sum = pairwise_sum(per_task)?.expect("nonempty");
    Ok(sum.scaled(1.0 / per_task.len() as f64))
}

/// Rescales `grad` to norm `max_norm` if it is longer.
pub fn clip_gradient(grad: &ParamVector, max_norm: f64) -> ParamVector {
    let norm = grad.norm();
    if norm > max_norm {
        grad.clone().scaled(max_norm / norm)
    } else {
        grad.clone()
    }
}

/// Clipped plain-SGD ascent step.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, config: &TrainConfig) -> Result<ParamVector> {
    check_len("gradient", params.len(), grad.len())?;
    grad.ensure_finite()
        .map_err(|e| Error::Numeric(format!("step aborted: {e}")))?;
    let clipped = clip_gradient(grad, config.grad_clip);
    let mut next = params.clone();
    next.axpy(config.learning_rate, &clipped)?;
    next.ensure_finite()?;
    Ok(next)
}
