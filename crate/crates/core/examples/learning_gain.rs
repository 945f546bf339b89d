//! Learning gain on a saturating reward curve.

use gradlens::metrics::{ema_smooth, eval_points, learning_gain};

fn main() -> gradlens::Result<()> {
    let n = 300;
    let rewards: Vec<f64> = (0..n).map(|t| 1.0 - (-(t as f64) / 80.0).exp()).collect();
    let s = 75;
    for t in eval_points(n, s, 3)? {
        println!("Gain({t}) = {:.4}", learning_gain(&rewards, t, s)?);
    }
    let ramp: Vec<f64> = (0..10).map(|k| k as f64).collect();
    println!("ramp, s = 3: Gain(5) = {}", learning_gain(&ramp, 5, 3)?);
    let smoothed = ema_smooth(&rewards, 0.7)?;
    println!("smoothed tail {:.4?}", &smoothed[n - 3..]);
    Ok(())
}
