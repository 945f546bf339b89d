//! Score functions of the two policy architectures against central differences.

use gradlens::policy::PolicySpec;
use gradlens::rng::seeded;
use rand::Rng;

fn main() -> gradlens::Result<()> {
    let ctx = [0.5, -1.0, 0.25, 2.0];
    for spec in [PolicySpec::linear(4, 3), PolicySpec::mlp(4, 3, 6, 7)] {
        let mut rng = seeded(1);
        let values = (0..spec.param_count()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let params = spec.params_from_values(values)?;
        let probs = spec.action_distribution(&params, &ctx)?;
        println!("{:?} ({} params)", spec.arch, spec.param_count());
        println!("  pi(.|s) = {probs:.4?}");
        for a in 0..spec.action_count {
            let g = spec.grad_log_prob(&params, &ctx, a)?;
            let fd = spec.finite_diff_grad(&params, &ctx, a, 1e-5)?;
            let err = g.sub(&fd)?.norm() / fd.norm();
            println!("  action {a}: |grad log pi| = {:.5}, rel err vs FD = {err:.2e}", g.norm());
        }
        for seg in params.segments() {
            println!("  segment `{}`: offset {}, len {}", seg.name, seg.offset, seg.len);
        }
    }
    Ok(())
}
