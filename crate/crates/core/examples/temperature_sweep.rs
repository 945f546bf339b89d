//! Uniform versus gradient-proportional sampling on the multi-domain preset,
//! written to a scratch directory.

use gradlens::harness::{sweep, ExperimentConfig, SweepGrid};
use gradlens::tasks::Preset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig::preset(Preset::MultiDomainAnalog);
    config.train.total_steps = 60;
    config.metrics.gain_window = Some(15);
    let out = std::env::temp_dir().join("gradlens-temperature-sweep");
    let outcome = sweep(&config, &SweepGrid::default(), &out, 4)?;
    for e in &outcome.entries {
        println!("{:<12} {}", e.label, e.error.as_deref().unwrap_or("ok"));
    }
    print!("{}", std::fs::read_to_string(&outcome.comparison)?);
    Ok(())
}
