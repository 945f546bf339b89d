//! Quadratic test bench: the gradient-to-suboptimality ratio bound, and how
//! gradient magnitude stops predicting progress across problems.

use gradlens::convex::{cross_task_demo, QuadraticProblem};
use gradlens::rng::seeded;
use rand::Rng;

fn main() -> gradlens::Result<()> {
    let mut rng = seeded(4);
    let p = QuadraticProblem::random(5, 100.0, &mut rng)?;
    println!("eigenvalues {:.3?}", p.eigenvalues());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let r = p.ratio(&x)?;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    println!("ratio range [{lo:.3}, {hi:.3}] within [2mu, 2beta] = [{:.3}, {:.3}]", 2.0 * p.mu(), 2.0 * p.beta());

    let stiff = QuadraticProblem::new(vec![100.0], vec![0.0])?;
    let flat = QuadraticProblem::new(vec![1.0], vec![0.0])?;
    let demo = cross_task_demo(&stiff, &flat, &[1.0], &[1.0], 0.015, 12)?;
    println!("step  stiff |g|^2   stiff gain   flat |g|^2   flat gain");
    for (a, b) in demo.trace_a.points.iter().zip(&demo.trace_b.points) {
        println!(
            "{:>4}  {:>11.4e}  {:>11.4e}  {:>11.4e}  {:>10.4e}",
            a.step, a.sq_grad_norm, a.gain, b.sq_grad_norm, b.gain
        );
    }
    println!(
        "crossover at step {:?}; within-task Pearson {:.4?} / {:.4?}",
        demo.crossover_step, demo.within_pearson_a, demo.within_pearson_b
    );
    Ok(())
}
