//! Gradient-proportional task probabilities across temperatures.

use gradlens::rng::seeded;
use gradlens::scheduler::{grad_prop_probs, sample_task, DEFAULT_FLOOR};

fn main() -> gradlens::Result<()> {
    let norms = [10.0, 1.0, 1.0, 1.0];
    println!("norms {norms:?}, floor {DEFAULT_FLOOR}");
    for eta in [1e6, 100.0, 10.0, 1.0, 0.1, 0.01] {
        let p = grad_prop_probs(&norms, eta, DEFAULT_FLOOR)?;
        println!("eta {eta:>8}: {p:.4?}");
    }

    let probs = grad_prop_probs(&[0.8, 0.3, 0.5, 0.1], 0.2, DEFAULT_FLOOR)?;
    let mut counts = [0usize; 4];
    let mut rng = seeded(9);
    for _ in 0..10_000 {
        counts[sample_task(&probs, &mut rng)?] += 1;
    }
    println!("probs {probs:.4?}");
    println!("draws {counts:?} / 10000");
    Ok(())
}
