//! Diagonal quadratics as an exactly checkable β-smooth, μ-PL test bench.
//!
//! For `f(x) = ½ (x - x*)ᵀ diag(λ) (x - x*)` the smoothness and PL constants
//! are the extreme eigenvalues, so `2μ ≤ ‖∇f‖² / (f - f*) ≤ 2β` holds with no
//! slack from estimated constants.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::metrics::{pearson, StepRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProblem {
    eigenvalues: Vec<f64>,
    optimum: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(eigenvalues: Vec<f64>, optimum: Vec<f64>) -> Result<Self> {
        check_len("optimum", eigenvalues.len(), optimum.len())?;
        if eigenvalues.is_empty() {
            return Err(Error::config("quadratic needs at least one dimension"));
        }
        if eigenvalues.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::config("eigenvalues must be positive and finite"));
        }
        Ok(QuadraticProblem {
            eigenvalues,
            optimum,
        })
    }

    /// Random spectrum with condition number up to `max_condition`, eigenvalues
    /// log-uniform in `[1, max_condition]`, optimum uniform in `[-1, 1]^dim`.
    pub fn random<R: Rng + ?Sized>(dim: usize, max_condition: f64, rng: &mut R) -> Result<Self> {
        let top = max_condition.max(1.0).ln();
        let eig = (0..dim).map(|_| rng.random_range(0.0..=top).exp()).collect();
        let opt = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        QuadraticProblem::new(eig, opt)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    /// PL constant.
    pub fn mu(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smoothness constant.
    pub fn beta(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_len("point", self.dim(), x.len())?;
        Ok(0.5
            * x.iter()
                .zip(&self.optimum)
                .zip(&self.eigenvalues)
                .map(|((xi, oi), l)| l * (xi - oi) * (xi - oi))
                .sum::<f64>())
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("point", self.dim(), x.len())?;
        Ok(x.iter()
            .zip(&self.optimum)
            .zip(&self.eigenvalues)
            .map(|((xi, oi), l)| l * (xi - oi))
            .collect())
    }

    /// `f(x) - f*`; the minimum value is 0.
    pub fn suboptimality(&self, x: &[f64]) -> Result<f64> {
        self.value(x)
    }

    /// `‖∇f(x)‖² / (f(x) - f*)`.
    pub fn ratio(&self, x: &[f64]) -> Result<f64> {
        let sub = self.suboptimality(x)?;
        if !(sub > 0.0) {
            return Err(Error::Domain("ratio undefined at the optimum".into()));
        }
        Ok(sq_norm(&self.grad(x)?) / sub)
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub suboptimality: f64,
    pub sq_grad_norm: f64,
    /// `suboptimality(t) - suboptimality(t + 1)`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdTrace {
    pub points: Vec<TracePoint>,
}

impl GdTrace {
    pub fn suboptimality(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.suboptimality).collect()
    }

    pub fn sq_grad_norms(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sq_grad_norm).collect()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.gain).collect()
    }

    /// Pearson correlation of squared gradient norm against per-step gain.
    pub fn norm_gain_correlation(&self) -> Option<f64> {
        pearson(&self.sq_grad_norms(), &self.gains())
    }

    /// Rows in the training telemetry schema: `reward_mean` carries
    /// `-suboptimality`, `abs_adv_mean` the per-step gain.
    pub fn to_step_records(&self, label: &str) -> Vec<StepRecord> {
        self.points
            .iter()
            .map(|p| StepRecord {
                step: p.step as u64,
                task_id: label.to_string(),
                reward_mean: -p.suboptimality,
                abs_adv_mean: p.gain,
                sq_norm_est: p.sq_grad_norm,
                norm_est: p.sq_grad_norm.sqrt(),
                sampler_prob: 1.0,
                response_len: 0,
                padding_len: 0,
            })
            .collect()
    }
}

/// Plain gradient descent from `x0`, recording `steps` points.
pub fn gd_trace(
    problem: &QuadraticProblem,
    x0: &[f64],
    step_size: f64,
    steps: usize,
) -> Result<GdTrace> {
    check_len("start point", problem.dim(), x0.len())?;
    if !(step_size > 0.0 && step_size < 2.0 / problem.beta()) {
        return Err(Error::config(format!(
            "step size {step_size} outside (0, 2/β = {})",
            2.0 / problem.beta()
        )));
    }
    let mut x = x0.to_vec();
    let mut sub = problem.suboptimality(&x)?;
    let mut points = Vec::with_capacity(steps);
    for step in 0..steps {
        let g = problem.grad(&x)?;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step_size * gi;
        }
        let next = problem.suboptimality(&x)?;
        points.push(TracePoint {
            step,
            suboptimality: sub,
            sq_grad_norm: sq_norm(&g),
            gain: sub - next,
        });
        sub = next;
    }
    Ok(GdTrace { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTaskDemo {
    pub trace_a: GdTrace,
    pub trace_b: GdTrace,
    pub within_pearson_a: Option<f64>,
    pub within_pearson_b: Option<f64>,
    /// First step where the task with the larger squared gradient norm has
    /// the strictly smaller gain.
    pub crossover_step: Option<usize>,
}

/// Runs both problems with a shared step size and looks for a step where
/// gradient magnitude and gain disagree across the two.
pub fn cross_task_demo(
    problem_a: &QuadraticProblem,
    problem_b: &QuadraticProblem,
    x0_a: &[f64],
    x0_b: &[f64],
    step_size: f64,
    steps: usize,
) -> Result<CrossTaskDemo> {
    let trace_a = gd_trace(problem_a, x0_a, step_size, steps)?;
    let trace_b = gd_trace(problem_b, x0_b, step_size, steps)?;
    let crossover_step = trace_a
        .points
        .iter()
        .zip(&trace_b.points)
        .find(|(a, b)| {
            (a.sq_grad_norm > b.sq_grad_norm && a.gain < b.gain)
                || (b.sq_grad_norm > a.sq_grad_norm && b.gain < a.gain)
        })
        .map(|(a, _)| a.step);
    Ok(CrossTaskDemo {
        within_pearson_a: trace_a.norm_gain_correlation(),
        within_pearson_b: trace_b.norm_gain_correlation(),
        trace_a,
        trace_b,
        crossover_step,
    })
}
