//! Samples a few instances per task family and scores a uniform policy.

use gradlens::rng::SeedTree;
use gradlens::tasks::{task_registry, Preset, TaskSetConfig};
use rand::Rng;

fn main() -> gradlens::Result<()> {
    let config = TaskSetConfig {
        preset: Some(Preset::MultiDomainAnalog),
        custom: Vec::new(),
    };
    let tasks = task_registry(&config, 8, 4)?;
    let seeds = SeedTree::new(0);
    for task in &tasks {
        println!(
            "{} ({:?}, scale {}, difficulty {}, {} labels)",
            task.id,
            task.family,
            task.feature_scale,
            task.difficulty,
            task.label_count()
        );
        for i in 0..2 {
            let inst = task.sample_instance(&mut seeds.task_stream(&task.id, task.seed, i));
            let ctx: Vec<String> = inst.context.iter().map(|c| format!("{c:+.2}")).collect();
            println!("  [{}] -> label {}", ctx.join(" "), inst.correct_action);
        }
        let mut rng = seeds.stream("uniform-policy", &[0]);
        let n = 20_000u64;
        let mut total = 0.0;
        for i in 0..n {
            let inst = task.sample_instance(&mut seeds.task_stream(&task.id, task.seed, 100 + i));
            total += task.score(&inst, rng.random_range(0..task.action_count))?;
        }
        println!("  uniform-policy reward {:.4}", total / n as f64);
    }
    Ok(())
}
