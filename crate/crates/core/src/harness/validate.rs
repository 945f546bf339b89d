//! Built-in self-checks runnable from the command line.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::convex::{cross_task_demo, QuadraticProblem};
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::policy::{softmax, PolicySpec};
use crate::probe::{cross_product_sqnorm, naive_sqnorm};
use crate::rng::seeded;
use crate::scheduler::{apply_floor, grad_prop_probs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Estimator,
    Convex,
    Gradients,
    Sampler,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimator" => Ok(Suite::Estimator),
            "convex" => Ok(Suite::Convex),
            "gradients" => Ok(Suite::Gradients),
            "sampler" => Ok(Suite::Sampler),
            other => Err(Error::Usage(format!(
                "unknown suite `{other}` (expected estimator, convex, gradients or sampler)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub criterion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, passed: bool, measured: f64, criterion: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        measured,
        criterion: criterion.into(),
    }
}

pub fn validate(suite: Suite) -> ValidationReport {
    let checks = match suite {
        Suite::Estimator => estimator_checks(),
        Suite::Convex => convex_checks(),
        Suite::Gradients => gradient_checks(),
        Suite::Sampler => sampler_checks(),
    };
    ValidationReport {
        suite,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// Mean and standard error of a sample.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Simulates `batches` batches of `batch` Gaussian gradient samples around
/// `mean` with identity covariance; returns per-batch (cross, naive).
pub fn gaussian_estimator_samples(
    mean: &[f64],
    batch: usize,
    batches: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let d = mean.len();
    let half = batch.div_ceil(2);
    let mut cross = Vec::with_capacity(batches);
    let mut naive = Vec::with_capacity(batches);
    let mut samples = vec![vec![0.0; d]; batch];
    for _ in 0..batches {
        for s in samples.iter_mut() {
            for (v, m) in s.iter_mut().zip(mean) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = m + z;
            }
        }
        let avg = |rows: &[Vec<f64>]| {
            let mut acc = vec![0.0; d];
            for r in rows {
                for (a, v) in acc.iter_mut().zip(r) {
                    *a += v;
                }
            }
            ParamVector::from_vec(acc.into_iter().map(|a| a / rows.len() as f64).collect())
        };
        let g1 = avg(&samples[..half]);
        let g2 = avg(&samples[half..]);
        cross.push(cross_product_sqnorm(&g1, &g2).expect("equal lengths"));
        naive.push(naive_sqnorm(&avg(&samples)));
    }
    (cross, naive)
}

fn estimator_checks() -> Vec<Check> {
    let (cross, naive) = gaussian_estimator_samples(&[3.0, 4.0], 8, 100_000, 20_240_601);
    let (cm, cse) = mean_se(&cross);
    let (nm, nse) = mean_se(&naive);
    let diffs: Vec<f64> = naive.iter().zip(&cross).map(|(n, c)| n - c).collect();
    let (bias, bse) = mean_se(&diffs);
    let (zero, _) = gaussian_estimator_samples(&[0.0, 0.0], 8, 20_000, 7);
    let (zm, zse) = mean_se(&zero);
    let both_signs = zero.iter().any(|&v| v < 0.0) && zero.iter().any(|&v| v > 0.0);
    vec![
        check("cross_product_unbiased", (cm - 25.0).abs() <= 3.0 * cse, cm, format!("|mean - 25| <= 3 SE ({:.4})", 3.0 * cse)),
        check("naive_biased_upward", (nm - 25.25).abs() <= 3.0 * nse, nm, format!("|mean - 25.25| <= 3 SE ({:.4})", 3.0 * nse)),
        check("naive_bias_is_trace_over_b", (bias - 0.25).abs() <= 3.0 * bse, bias, format!("|bias - 0.25| <= 3 SE ({:.4})", 3.0 * bse)),
        check("zero_gradient_mean", zm.abs() <= 3.0 * zse && both_signs, zm, "|mean| <= 3 SE and both signs observed"),
    ]
}

fn convex_checks() -> Vec<Check> {
    let mut rng = seeded(11);
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=8);
        let p = QuadraticProblem::random(dim, 1e3, &mut rng).expect("valid problem");
        let (lo, hi) = (2.0 * p.mu(), 2.0 * p.beta());
        for _ in 0..1000 {
            let x: Vec<f64> = p.optimum().iter().map(|o| o + rng.random_range(-3.0..3.0)).collect();
            let Ok(r) = p.ratio(&x) else { continue };
            let excess = (lo - r).max(r - hi).max(0.0);
            worst = worst.max(excess);
            if r < lo - 1e-9 || r > hi + 1e-9 {
                violations += 1;
            }
        }
    }
    let iso = QuadraticProblem::new(vec![3.5; 4], vec![0.0; 4]).expect("valid problem");
    let mut iso_err: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        iso_err = iso_err.max((iso.ratio(&x).expect("nonoptimal") - 7.0).abs());
    }
    let a = QuadraticProblem::new(vec![100.0], vec![0.0]).expect("valid problem");
    let b = QuadraticProblem::new(vec![1.0], vec![0.0]).expect("valid problem");
    let demo = cross_task_demo(&a, &b, &[1.0], &[1.0], 0.015, 40).expect("valid step size");
    let min_corr = demo
        .within_pearson_a
        .unwrap_or(f64::NAN)
        .min(demo.within_pearson_b.unwrap_or(f64::NAN));
    vec![
        check("ratio_within_bounds", violations == 0, violations as f64, format!("0 violations of [2mu, 2beta] (worst excess {worst:e})")),
        check("isotropic_ratio_tight", iso_err <= 1e-12, iso_err, "|ratio - 2mu| <= 1e-12"),
        check(
            "cross_task_crossover",
            demo.crossover_step.is_some(),
            demo.crossover_step.map(|s| s as f64).unwrap_or(f64::NAN),
            "some step where the stiff task has larger sq-norm and smaller gain",
        ),
        check("within_task_correlation", min_corr > 0.99, min_corr, "Pearson(sq_grad_norm, gain) > 0.99 on both traces"),
    ]
}

/// Largest relative L2 error of the analytic score against central
/// differences over `trials` random (params, context, action) triples.
pub fn max_gradient_error(spec: &PolicySpec, trials: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let values: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = spec.params_from_values(values).expect("layout");
        let ctx: Vec<f64> = (0..spec.context_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = rng.random_range(0..spec.action_count);
        let g = spec.grad_log_prob(&params, &ctx, a).expect("shapes");
        let fd = spec.finite_diff_grad(&params, &ctx, a, 1e-5).expect("shapes");
        let err = g.sub(&fd).expect("same layout").norm() / fd.norm().max(1e-300);
        worst = worst.max(err);
    }
    worst
}

fn gradient_checks() -> Vec<Check> {
    let linear = PolicySpec::linear(5, 4);
    let mlp = PolicySpec::mlp(5, 4, 6, 3);
    let lin_err = max_gradient_error(&linear, 100, 1);
    let mlp_err = max_gradient_error(&mlp, 100, 2);

    let mut rng = seeded(5);
    let mut score_sum: f64 = 0.0;
    let mut shift_err: f64 = 0.0;
    for spec in [&linear, &mlp] {
        for _ in 0..50 {
            let values: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let params = spec.params_from_values(values).expect("layout");
            let ctx: Vec<f64> = (0..spec.context_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let probs = spec.action_distribution(&params, &ctx).expect("shapes");
            let mut acc = ParamVector::zeros_like(&params);
            for (a, p) in probs.iter().enumerate() {
                acc.axpy(*p, &spec.grad_log_prob(&params, &ctx, a).expect("shapes")).expect("layout");
            }
            score_sum = score_sum.max(acc.values().iter().fold(0.0, |m, v| m.max(v.abs())));
            let logits = spec.logits(&params, &ctx).expect("shapes");
            let shifted: Vec<f64> = logits.iter().map(|z| z + 17.25).collect();
            for (x, y) in softmax(&logits).iter().zip(softmax(&shifted)) {
                shift_err = shift_err.max((x - y).abs());
            }
        }
    }
    vec![
        check("linear_softmax_vs_fd", lin_err < 1e-5, lin_err, "relative L2 error < 1e-5"),
        check("mlp1_vs_fd", mlp_err < 1e-4, mlp_err, "relative L2 error < 1e-4"),
        check("expected_score_zero", score_sum <= 1e-10, score_sum, "max |sum_a pi(a) grad log pi(a)| <= 1e-10"),
        check("softmax_shift_invariance", shift_err <= 1e-12, shift_err, "max abs difference <= 1e-12"),
    ]
}

fn sampler_checks() -> Vec<Check> {
    let mut rng = seeded(17);
    let (mut sum_err, mut floor_gap, mut shift_err, mut perm_err, mut idem_err): (f64, f64, f64, f64, f64) =
        (0.0, f64::INFINITY, 0.0, 0.0, 0.0);
    for _ in 0..500 {
        let m = rng.random_range(2..=8);
        let norms: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..5.0)).collect();
        let eta = [0.1, 0.01, 0.001, 1.0][rng.random_range(0..4)];
        let floor = 0.1f64.min(1.0 / m as f64);
        let p = grad_prop_probs(&norms, eta, floor).expect("valid");
        sum_err = sum_err.max((p.iter().sum::<f64>() - 1.0).abs());
        floor_gap = floor_gap.min(p.iter().fold(f64::INFINITY, |a, &b| a.min(b)) - floor);
        let shifted: Vec<f64> = norms.iter().map(|n| n + 2.5).collect();
        let ps = grad_prop_probs(&shifted, eta, floor).expect("valid");
        shift_err = shift_err.max(p.iter().zip(&ps).fold(0.0, |a, (x, y)| a.max((x - y).abs())));
        let rev: Vec<f64> = norms.iter().rev().copied().collect();
        let pr = grad_prop_probs(&rev, eta, floor).expect("valid");
        perm_err = perm_err.max(p.iter().zip(pr.iter().rev()).fold(0.0, |a, (x, y)| a.max((x - y).abs())));
        let again = apply_floor(&p, floor);
        idem_err = idem_err.max(p.iter().zip(&again).fold(0.0, |a, (x, y)| a.max((x - y).abs())));
    }
    let hot = grad_prop_probs(&[1.0, 0.2, 0.5, 0.9], 1e6, 0.1).expect("valid");
    let hot_err = hot.iter().fold(0.0f64, |a, p| a.max((p - 0.25).abs()));
    let cold = grad_prop_probs(&[10.0, 1.0, 1.0, 1.0], 0.01, 0.1).expect("valid");
    let cold_err = cold
        .iter()
        .zip([0.7, 0.1, 0.1, 0.1])
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    vec![
        check("sums_to_one", sum_err <= 1e-12, sum_err, "|sum - 1| <= 1e-12"),
        check("floor_respected", floor_gap >= -1e-12, floor_gap, "min(p) - floor >= -1e-12"),
        check("shift_invariant", shift_err <= 1e-12, shift_err, "max diff <= 1e-12"),
        check("permutation_equivariant", perm_err <= 1e-12, perm_err, "max diff <= 1e-12"),
        check("floor_idempotent", idem_err <= 1e-15, idem_err, "max diff <= 1e-15"),
        check("hot_limit_uniform", hot_err <= 1e-6, hot_err, "eta = 1e6 within 1e-6 of uniform"),
        check("cold_fixture", cold_err <= 1e-12, cold_err, "norms (10,1,1,1), eta 0.01 -> (0.7, 0.1, 0.1, 0.1)"),
    ]
}
