//! Post-hoc analysis over the per-step telemetry stream.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of the step CSV; `csv` derives the header from field order.
pub const STEP_CSV_HEADER: &str =
    "step,task_id,reward_mean,abs_adv_mean,sq_norm_est,norm_est,sampler_prob,response_len,padding_len";

/// One (step, task) telemetry row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub task_id: String,
    pub reward_mean: f64,
    pub abs_adv_mean: f64,
    pub sq_norm_est: f64,
    pub norm_est: f64,
    pub sampler_prob: f64,
    pub response_len: u32,
    pub padding_len: u32,
}

/// Records of one task in step order.
pub fn task_records<'a>(records: &'a [StepRecord], task_id: &str) -> Vec<&'a StepRecord> {
    let mut out: Vec<_> = records.iter().filter(|r| r.task_id == task_id).collect();
    out.sort_by_key(|r| r.step);
    out
}

/// Distinct task ids in first-appearance order.
pub fn task_ids(records: &[StepRecord]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    records
        .iter()
        .filter(|r| seen.insert(r.task_id.as_str()))
        .map(|r| r.task_id.clone())
        .collect()
}

/// `Gain(t) = mean(R[t+1..=t+s]) - mean(R[t-s..t])`.
pub fn learning_gain(rewards: &[f64], t: usize, s: usize) -> Result<f64> {
    if s == 0 {
        return Err(Error::config("gain window must be positive"));
    }
    if t < s || t + s >= rewards.len() {
        return Err(Error::Bounds(format!(
            "gain window {s} around index {t} does not fit a series of length {}",
            rewards.len()
        )));
    }
    let forward: f64 = (1..=s).map(|i| rewards[t + i]).sum();
    let backward: f64 = (1..=s).map(|i| rewards[t - i]).sum();
    Ok((forward - backward) / s as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub task_id: String,
    /// Indices into the task's own observation sequence.
    pub eval_steps: Vec<usize>,
    /// Training step at which each evaluated observation was made.
    pub train_steps: Vec<u64>,
    pub gains: Vec<f64>,
    pub window: usize,
}

/// `num_points` evenly spaced indices covering `[s, n - 1 - s]`.
pub fn eval_points(n: usize, s: usize, num_points: usize) -> Result<Vec<usize>> {
    if s == 0 || num_points == 0 {
        return Err(Error::config("gain window and point count must be positive"));
    }
    if n < 2 * s + 1 {
        return Err(Error::Bounds(format!(
            "{n} observations are too few for a gain window of {s}"
        )));
    }
    let span = n - 1 - 2 * s;
    if num_points == 1 {
        return Ok(vec![s + span / 2]);
    }
    if span < num_points - 1 {
        return Err(Error::Bounds(format!(
            "{n} observations cannot hold {num_points} distinct gain windows of {s}"
        )));
    }
    Ok((0..num_points)
        .map(|k| s + (k as f64 * span as f64 / (num_points - 1) as f64).round() as usize)
        .collect())
}

/// Gains at evenly spaced interior points of one task's reward series.
///
/// The series is indexed by the task's own observation count, so rarely
/// sampled tasks are not stretched over wall-clock steps.
pub fn gain_report(
    records: &[StepRecord],
    task_id: &str,
    s: usize,
    num_points: usize,
) -> Result<GainReport> {
    let rows = task_records(records, task_id);
    let rewards: Vec<f64> = rows.iter().map(|r| r.reward_mean).collect();
    let points = eval_points(rewards.len(), s, num_points)?;
    let gains = points
        .iter()
        .map(|&t| learning_gain(&rewards, t, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(GainReport {
        task_id: task_id.to_string(),
        train_steps: points.iter().map(|&t| rows[t].step).collect(),
        eval_steps: points,
        gains,
        window: s,
    })
}

/// Same recurrence as the probe EMA; the first element passes through.
pub fn ema_smooth(series: &[f64], coeff: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&coeff) {
        return Err(Error::config(format!("smoothing coefficient must lie in [0, 1), got {coeff}")));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut prev: Option<f64> = None;
    for &v in series {
        let next = match prev {
            None => v,
            Some(p) => coeff * p + (1.0 - coeff) * v,
        };
        out.push(next);
        prev = Some(next);
    }
    Ok(out)
}

/// How much faster task A moves than task B under a shared learning rate:
/// `sqrt(sq_norm_a / sq_norm_b)`.
pub fn effective_lr_ratio(sq_norm_a: f64, sq_norm_b: f64) -> Result<f64> {
    if !(sq_norm_b > 0.0) {
        return Err(Error::Domain(format!(
            "reference squared norm must be positive, got {sq_norm_b}"
        )));
    }
    if !(sq_norm_a >= 0.0) {
        return Err(Error::Domain(format!("squared norm must be nonnegative, got {sq_norm_a}")));
    }
    Ok((sq_norm_a / sq_norm_b).sqrt())
}

/// Time-averaged `sq_norm_est` per task.
pub fn mean_sq_norms(records: &[StepRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.task_id.clone()).or_default();
        e.0 += r.sq_norm_est;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Tasks whose time-averaged squared-norm estimate exceeds `threshold` times
/// the median task's.
pub fn dominance_report(records: &[StepRecord], threshold: f64) -> Result<BTreeSet<String>> {
    if !(threshold > 0.0) {
        return Err(Error::config(format!("dominance threshold must be positive, got {threshold}")));
    }
    let means = mean_sq_norms(records);
    let values: Vec<f64> = means.values().copied().collect();
    let Some(med) = median(&values) else {
        return Ok(BTreeSet::new());
    };
    Ok(means
        .into_iter()
        .filter(|(_, v)| *v > threshold * med)
        .map(|(k, _)| k)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    /// Why the coefficients are missing, when they are.
    pub undefined: Option<String>,
}

impl Coefficients {
    fn compute(x: &[f64], y: &[f64], min_points: usize) -> Self {
        let n = x.len();
        let undefined = |why: &str| Coefficients {
            n,
            pearson: None,
            spearman: None,
            undefined: Some(why.to_string()),
        };
        if n < min_points {
            return undefined("too few points");
        }
        match (pearson(x, y), pearson(&ranks(x), &ranks(y))) {
            (Some(p), Some(s)) => Coefficients {
                n,
                pearson: Some(p),
                spearman: Some(s),
                undefined: None,
            },
            _ => undefined("zero variance"),
        }
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Fractional ranks, ties averaged.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub within_task: BTreeMap<String, Coefficients>,
    /// Computed on one (mean x, mean y) point per task.
    pub cross_task: Coefficients,
    pub pooled: Coefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub adv_vs_norm: PairCorrelation,
    pub response_len_vs_norm: PairCorrelation,
    pub padding_len_vs_norm: PairCorrelation,
}

pub const MIN_WITHIN_TASK_POINTS: usize = 3;

fn pair_correlation(records: &[StepRecord], x_of: impl Fn(&StepRecord) -> f64) -> PairCorrelation {
    let mut within = BTreeMap::new();
    let (mut mean_x, mut mean_y) = (Vec::new(), Vec::new());
    for id in task_ids(records) {
        let rows = task_records(records, &id);
        let x: Vec<f64> = rows.iter().map(|r| x_of(r)).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.norm_est).collect();
        mean_x.push(x.iter().sum::<f64>() / x.len() as f64);
        mean_y.push(y.iter().sum::<f64>() / y.len() as f64);
        within.insert(id, Coefficients::compute(&x, &y, MIN_WITHIN_TASK_POINTS));
    }
    let all_x: Vec<f64> = records.iter().map(&x_of).collect();
    let all_y: Vec<f64> = records.iter().map(|r| r.norm_est).collect();
    PairCorrelation {
        within_task: within,
        cross_task: Coefficients::compute(&mean_x, &mean_y, 2),
        pooled: Coefficients::compute(&all_x, &all_y, MIN_WITHIN_TASK_POINTS),
    }
}

/// Correlations of `norm_est` with `abs_adv_mean`, `response_len` and
/// `padding_len`, within each task, across task means, and pooled.
pub fn correlation_report(records: &[StepRecord]) -> CorrelationReport {
    CorrelationReport {
        adv_vs_norm: pair_correlation(records, |r| r.abs_adv_mean),
        response_len_vs_norm: pair_correlation(records, |r| r.response_len as f64),
        padding_len_vs_norm: pair_correlation(records, |r| r.padding_len as f64),
    }
}
