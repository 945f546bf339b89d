//! One GRPO update by hand: rollouts, group advantages, gradient, clipped step.

use gradlens::grpo::{batch_gradient, rollout_group, sgd_step, Regularizers, TrainConfig};
use gradlens::policy::PolicySpec;
use gradlens::rng::SeedTree;
use gradlens::tasks::{Family, TaskSpec};

fn main() -> gradlens::Result<()> {
    let policy = PolicySpec::linear(6, 4);
    let task = TaskSpec::new("parity", Family::Parity, 6, 4);
    let config = TrainConfig {
        batch_size: 32,
        group_size: 8,
        learning_rate: 0.1,
        ..TrainConfig::default()
    };
    let seeds = SeedTree::new(3);
    let mut params = policy.init_params()?;
    let reference = params.clone();

    for step in 0..5u64 {
        let mut groups = Vec::new();
        for g in 0..config.groups_per_batch() as u64 {
            let mut group = rollout_group(&policy, &params, &task, config.group_size, &mut seeds.rollout_stream(step, g))?;
            group.normalize()?;
            groups.push(group);
        }
        if step == 0 {
            let g = &groups[0];
            println!("rewards    {:?}", g.rewards);
            println!("advantages {:.3?}", g.advantages);
        }
        let grad = batch_gradient(&policy, &params, &groups, &reference, Regularizers::from(&config))?;
        let reward: f64 = groups.iter().map(|g| g.reward_mean()).sum::<f64>() / groups.len() as f64;
        println!("step {step}: reward {reward:.3}, |grad| {:.4}", grad.norm());
        params = sgd_step(&params, &grad, &config)?;
    }

    // Below the clip, a gradient sqrt(33) times larger moves the parameters sqrt(33) times further.
    let g = gradlens::ParamVector::from_vec(vec![0.03, -0.04, 0.0, 0.1]);
    let origin = gradlens::ParamVector::from_vec(vec![0.0; 4]);
    let small = sgd_step(&origin, &g, &config)?.norm();
    let large = sgd_step(&origin, &g.clone().scaled(33f64.sqrt()), &config)?.norm();
    println!("update ratio {:.6}", large / small);
    Ok(())
}
