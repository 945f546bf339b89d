//! Small discrete-action policies with closed-form score functions.
//!
//! Two architectures are supported:
//!
//! * `linear_softmax`: one weight row per action over the raw context, so
//!   `logit_a = w_a · s`. A single segment named `output`.
//! * `mlp1`: `logits = W2 tanh(W1 s + b1) + b2`, segments `hidden` (W1, b1)
//!   and `output` (W2, b2).
//!
//! Gradients are assembled by pushing a logit-space cotangent back through the
//! model ([`PolicySpec::backprop_logits`]); the score function is the special
//! case where the cotangent is `onehot(a) - π`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::params::ParamVector;
use crate::rng;

pub const HIDDEN_SEGMENT: &str = "hidden";
pub const OUTPUT_SEGMENT: &str = "output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    LinearSoftmax,
    Mlp1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub arch: Arch,
    pub context_dim: usize,
    pub action_count: usize,
    #[serde(default)]
    pub hidden_dim: usize,
    #[serde(default)]
    pub init_seed: u64,
}

impl PolicySpec {
    pub fn linear(context_dim: usize, action_count: usize) -> Self {
        PolicySpec {
            arch: Arch::LinearSoftmax,
            context_dim,
            action_count,
            hidden_dim: 0,
            init_seed: 0,
        }
    }

    pub fn mlp(context_dim: usize, action_count: usize, hidden_dim: usize, init_seed: u64) -> Self {
        PolicySpec {
            arch: Arch::Mlp1,
            context_dim,
            action_count,
            hidden_dim,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_dim == 0 {
            return Err(Error::config("context_dim must be positive"));
        }
        if self.action_count < 2 {
            return Err(Error::config("action_count must be at least 2"));
        }
        if self.arch == Arch::Mlp1 && self.hidden_dim == 0 {
            return Err(Error::config("mlp1 requires hidden_dim > 0"));
        }
        Ok(())
    }

    fn layout(&self) -> Vec<(&'static str, usize)> {
        let (d, a, h) = (self.context_dim, self.action_count, self.hidden_dim);
        match self.arch {
            Arch::LinearSoftmax => vec![(OUTPUT_SEGMENT, a * d)],
            Arch::Mlp1 => vec![(HIDDEN_SEGMENT, h * d + h), (OUTPUT_SEGMENT, a * h + a)],
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|(_, n)| n).sum()
    }

    /// Zeros for `linear_softmax`; seeded `U(-1/√fan_in, 1/√fan_in)` for `mlp1`.
    pub fn init_params(&self) -> Result<ParamVector> {
        self.validate()?;
        let values = match self.arch {
            Arch::LinearSoftmax => vec![0.0; self.param_count()],
            Arch::Mlp1 => {
                let (d, a, h) = (self.context_dim, self.action_count, self.hidden_dim);
                let mut rng = rng::seeded(self.init_seed);
                let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                };
                let mut v = draw(h * d + h, d);
                v.extend(draw(a * h + a, h));
                v
            }
        };
        ParamVector::new(values, &self.layout())
    }

    /// Wraps raw values in this spec's segment layout.
    pub fn params_from_values(&self, values: Vec<f64>) -> Result<ParamVector> {
        self.validate()?;
        ParamVector::new(values, &self.layout())
    }

    fn check_inputs(&self, params: &ParamVector, context: &[f64]) -> Result<()> {
        check_len("parameter vector", self.param_count(), params.len())?;
        check_len("context", self.context_dim, context.len())
    }

    pub fn logits(&self, params: &ParamVector, context: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(params, context)?;
        Ok(self.forward(params.values(), context).logits)
    }

    fn forward(&self, p: &[f64], s: &[f64]) -> Forward {
        let (d, a, h) = (self.context_dim, self.action_count, self.hidden_dim);
        match self.arch {
            Arch::LinearSoftmax => Forward {
                logits: (0..a).map(|k| dot(&p[k * d..(k + 1) * d], s)).collect(),
                hidden: Vec::new(),
            },
            Arch::Mlp1 => {
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(a * h);
                let hidden: Vec<f64> = (0..h)
                    .map(|k| (dot(&w1[k * d..(k + 1) * d], s) + b1[k]).tanh())
                    .collect();
                let logits = (0..a)
                    .map(|k| dot(&w2[k * h..(k + 1) * h], &hidden) + b2[k])
                    .collect();
                Forward { logits, hidden }
            }
        }
    }

    pub fn log_probs(&self, params: &ParamVector, context: &[f64]) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.logits(params, context)?))
    }

    /// π(·|context), computed through log-sum-exp.
    pub fn action_distribution(&self, params: &ParamVector, context: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .log_probs(params, context)?
            .into_iter()
            .map(f64::exp)
            .collect())
    }

    /// Pulls a cotangent on the logits back to parameter space.
    pub fn backprop_logits(
        &self,
        params: &ParamVector,
        context: &[f64],
        dlogits: &[f64],
    ) -> Result<ParamVector> {
        self.check_inputs(params, context)?;
        check_len("logit cotangent", self.action_count, dlogits.len())?;
        let (d, a, h) = (self.context_dim, self.action_count, self.hidden_dim);
        let mut grad = ParamVector::zeros_like(params);
        let g = grad.values_mut();
        match self.arch {
            Arch::LinearSoftmax => {
                for (k, dz) in dlogits.iter().enumerate() {
                    for (gj, sj) in g[k * d..(k + 1) * d].iter_mut().zip(context) {
                        *gj = dz * sj;
                    }
                }
            }
            Arch::Mlp1 => {
                let p = params.values();
                let fwd = self.forward(p, context);
                let w2 = &p[h * d + h..h * d + h + a * h];
                let (g_hidden, g_out) = g.split_at_mut(h * d + h);
                let (gw2, gb2) = g_out.split_at_mut(a * h);
                let mut dhidden = vec![0.0; h];
                for k in 0..a {
                    gb2[k] = dlogits[k];
                    for m in 0..h {
                        gw2[k * h + m] = dlogits[k] * fwd.hidden[m];
                        dhidden[m] += dlogits[k] * w2[k * h + m];
                    }
                }
                let (gw1, gb1) = g_hidden.split_at_mut(h * d);
                for m in 0..h {
                    let dpre = dhidden[m] * (1.0 - fwd.hidden[m] * fwd.hidden[m]);
                    gb1[m] = dpre;
                    for j in 0..d {
                        gw1[m * d + j] = dpre * context[j];
                    }
                }
            }
        }
        Ok(grad)
    }

    /// ∇θ log π(action | context).
    pub fn grad_log_prob(
        &self,
        params: &ParamVector,
        context: &[f64],
        action: usize,
    ) -> Result<ParamVector> {
        if action >= self.action_count {
            return Err(Error::contract(format!(
                "action {action} out of range for {} actions",
                self.action_count
            )));
        }
        let mut dz = self.action_distribution(params, context)?;
        dz.iter_mut().for_each(|p| *p = -*p);
        dz[action] += 1.0;
        self.backprop_logits(params, context, &dz)
    }

    /// Central-difference approximation of [`Self::grad_log_prob`]. Test oracle.
    pub fn finite_diff_grad(
        &self,
        params: &ParamVector,
        context: &[f64],
        action: usize,
        step: f64,
    ) -> Result<ParamVector> {
        if !(step > 0.0) {
            return Err(Error::contract(format!("finite-difference step must be positive, got {step}")));
        }
        if action >= self.action_count {
            return Err(Error::contract(format!("action {action} out of range")));
        }
        self.check_inputs(params, context)?;
        let mut probe = params.values().to_vec();
        let mut out = ParamVector::zeros_like(params);
        for i in 0..probe.len() {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = log_softmax(&self.forward(&probe, context).logits)[action];
            probe[i] = orig - step;
            let down = log_softmax(&self.forward(&probe, context).logits)[action];
            probe[i] = orig;
            out.values_mut()[i] = (up - down) / (2.0 * step);
        }
        Ok(out)
    }
}

struct Forward {
    logits: Vec<f64>,
    hidden: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| x - lse).collect()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    log_softmax(xs).into_iter().map(f64::exp).collect()
}
