//! The training loop, free of any file I/O.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grpo::{combine_group_gradients, group_gradient, rollout_on, sgd_step, Regularizers, RolloutGroup};
use crate::params::ParamVector;
use crate::policy::PolicySpec;
use crate::probe::{estimate_sqnorm, GradNormEstimate, NormTracker};
use crate::rng::SeedTree;
use crate::scheduler::{Assignment, SamplerState};
use crate::tasks::TaskSpec;
use crate::metrics::StepRecord;

use super::config::ExperimentConfig;

/// Everything one step produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub step: u64,
    pub records: Vec<StepRecord>,
    pub estimates: Vec<GradNormEstimate>,
    /// Task index drawn for each group, in group order.
    pub assignments: Vec<usize>,
    pub probs: Vec<f64>,
}

pub struct Trainer {
    config: ExperimentConfig,
    policy: PolicySpec,
    tasks: Vec<TaskSpec>,
    seeds: SeedTree,
    params: ParamVector,
    ref_params: ParamVector,
    tracker: NormTracker,
    sampler: SamplerState,
    subset: Vec<String>,
    instances_drawn: Vec<u64>,
    step: u64,
    pool: rayon::ThreadPool,
}

impl Trainer {
    /// `workers` sizes the rollout thread pool; results never depend on it.
    pub fn new(config: &ExperimentConfig, workers: usize) -> Result<Self> {
        let tasks = config.validate()?;
        let policy = config.policy.clone();
        let params = policy.init_params()?;
        let subset = config.probe.subset.resolve(&params)?;
        let sampler = SamplerState::new(
            config.sampler.mode,
            tasks.iter().map(|t| t.id.clone()).collect(),
            config.sampler.temperature,
            config.sampler.floor,
        )?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
        Ok(Trainer {
            config: config.clone(),
            tracker: NormTracker::new(config.probe.ema_coeff)?,
            seeds: SeedTree::new(config.seed),
            instances_drawn: vec![0; tasks.len()],
            ref_params: params.clone(),
            params,
            policy,
            tasks,
            sampler,
            subset,
            step: 0,
            pool,
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn sampler(&self) -> &SamplerState {
        &self.sampler
    }

    pub fn tracker(&self) -> &NormTracker {
        &self.tracker
    }

    pub fn is_finished(&self) -> bool {
        self.step as usize >= self.config.train.total_steps
    }

    /// Runs one step. On error the trainer state is left as it was before
    /// the step.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let step = self.step;
        let norms: BTreeMap<String, f64> = self
            .tasks
            .iter()
            .map(|t| (t.id.clone(), self.tracker.norm(&t.id).unwrap_or(0.0)))
            .collect();
        let sampler = self.sampler.refresh(&norms)?;

        let n_groups = self.config.train.groups_per_batch();
        let mut rng = self.seeds.sampler_stream(step);
        let assignments: Vec<usize> = match self.config.sampler.assignment {
            Assignment::PerGroup => (0..n_groups)
                .map(|_| sampler.sample(&mut rng))
                .collect::<Result<_>>()?,
            Assignment::PerBatch => vec![sampler.sample(&mut rng)?; n_groups],
        };

        let mut drawn = self.instances_drawn.clone();
        let jobs: Vec<(usize, usize, u64)> = assignments
            .iter()
            .enumerate()
            .map(|(g, &k)| {
                let idx = drawn[k];
                drawn[k] += 1;
                (g, k, idx)
            })
            .collect();

        let group_size = self.config.train.group_size;
        let (policy, params, tasks, seeds) = (&self.policy, &self.params, &self.tasks, &self.seeds);
        let groups: Vec<RolloutGroup> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(g, k, idx)| {
                    let task = &tasks[k];
                    let instance = task.sample_instance(&mut seeds.task_stream(&task.id, task.seed, idx));
                    let mut group = rollout_on(
                        policy,
                        params,
                        task,
                        instance,
                        group_size,
                        &mut seeds.rollout_stream(step, g as u64),
                    )?;
                    group.normalize()?;
                    Ok(group)
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let mut tracker = self.tracker.clone();
        let mut estimates = Vec::new();
        let mut by_task: Vec<Vec<RolloutGroup>> = vec![Vec::new(); self.tasks.len()];
        for (g, &k) in groups.iter().zip(&assignments) {
            by_task[k].push(g.clone());
        }
        for (k, task_groups) in by_task.iter().enumerate() {
            if task_groups.len() < 2 {
                continue;
            }
            let id = &self.tasks[k].id;
            let raw = estimate_sqnorm(policy, params, task_groups, &self.subset)?;
            let ema = tracker.observe(id, raw)?;
            estimates.push(GradNormEstimate {
                task_id: id.clone(),
                raw_cross: raw,
                sq_norm_ema: ema,
                norm: crate::probe::unsquared_norm(ema),
                step,
                subset: self.subset.clone(),
            });
        }

        let reg = Regularizers::from(&self.config.train);
        let ref_params = &self.ref_params;
        let per_group = self.pool.install(|| {
            groups
                .par_iter()
                .map(|g| group_gradient(policy, params, g, ref_params, reg))
                .collect::<Result<Vec<_>>>()
        })?;
        let sizes: Vec<usize> = groups.iter().map(RolloutGroup::len).collect();
        let grad = combine_group_gradients(per_group, &sizes)?;
        let next = sgd_step(&self.params, &grad, &self.config.train)?;

        let mut records = Vec::new();
        for (k, task_groups) in by_task.iter().enumerate() {
            let id = &self.tasks[k].id;
            let (Some(sq), false) = (tracker.sq_norm(id), task_groups.is_empty()) else {
                continue;
            };
            let n: usize = task_groups.iter().map(RolloutGroup::len).sum();
            let reward_sum: f64 = task_groups.iter().flat_map(|g| &g.rewards).sum();
            let adv_sum: f64 = task_groups
                .iter()
                .flat_map(|g| &g.advantages)
                .map(|a| a.abs())
                .sum();
            let pad_sum: u64 = task_groups.iter().map(|g| g.instance.padding_len as u64).sum();
            records.push(StepRecord {
                step,
                task_id: id.clone(),
                reward_mean: reward_sum / n as f64,
                abs_adv_mean: adv_sum / n as f64,
                sq_norm_est: sq,
                norm_est: crate::probe::unsquared_norm(sq),
                sampler_prob: sampler.probs[k],
                response_len: 1,
                padding_len: ((pad_sum as f64) / task_groups.len() as f64).round() as u32,
            });
        }

        self.params = next;
        self.tracker = tracker;
        self.instances_drawn = drawn;
        let probs = sampler.probs.clone();
        self.sampler = sampler;
        self.step += 1;
        Ok(StepOutcome {
            step,
            records,
            estimates,
            assignments,
            probs,
        })
    }

    /// Runs the remaining steps and returns every record.
    pub fn run_to_end(&mut self) -> Result<Vec<StepRecord>> {
        let mut all = Vec::new();
        while !self.is_finished() {
            all.extend(self.step()?.records);
        }
        Ok(all)
    }
}
