//! In-memory training on the single-domain preset, reporting which task's
//! gradient dominates and how advantage size tracks gradient size.

use gradlens::harness::{ExperimentConfig, Trainer};
use gradlens::metrics::{correlation_report, dominance_report, mean_sq_norms};
use gradlens::tasks::Preset;

fn main() -> gradlens::Result<()> {
    let config = ExperimentConfig::preset(Preset::SingleDomainAnalog);
    let mut trainer = Trainer::new(&config, 4)?;
    let records = trainer.run_to_end()?;

    for (task, sq) in mean_sq_norms(&records) {
        println!("{task:>8}: mean squared-norm estimate {sq:.5}");
    }
    println!("dominant: {:?}", dominance_report(&records, config.metrics.dominance_threshold)?);

    let corr = correlation_report(&records);
    println!("|A| vs norm, pooled Pearson {:?}", corr.adv_vs_norm.pooled.pearson);
    println!("|A| vs norm, across tasks  {:?}", corr.adv_vs_norm.cross_task.pearson);
    for (task, c) in &corr.adv_vs_norm.within_task {
        println!("  within {task}: {:?}", c.pearson);
    }
    Ok(())
}
