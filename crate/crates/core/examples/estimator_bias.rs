//! Split-batch cross product versus the squared norm of the batch mean.

use gradlens::probe::{cross_product_sqnorm, naive_sqnorm, split_halves};
use gradlens::rng::seeded;
use gradlens::ParamVector;
use rand_distr::{Distribution, Normal};

fn mean(rows: &[Vec<f64>]) -> ParamVector {
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        for (acc, v) in m.iter_mut().zip(r) {
            *acc += v / rows.len() as f64;
        }
    }
    ParamVector::from_vec(m)
}

fn main() -> gradlens::Result<()> {
    let g = [3.0, 4.0];
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rng = seeded(0);
    println!("true |g|^2 = 25, Tr(Sigma) = 2");
    for b in [2usize, 4, 8, 32] {
        let trials = 50_000;
        let (mut cross, mut naive) = (0.0, 0.0);
        for _ in 0..trials {
            let rows: Vec<Vec<f64>> = (0..b)
                .map(|_| g.iter().map(|x| x + noise.sample(&mut rng)).collect())
                .collect();
            let (h1, h2) = split_halves(&rows)?;
            cross += cross_product_sqnorm(&mean(h1), &mean(h2))?;
            naive += naive_sqnorm(&mean(&rows));
        }
        println!(
            "B = {b:>2}: cross {:.3}, naive {:.3} (expected bias {:.3})",
            cross / trials as f64,
            naive / trials as f64,
            2.0 / b as f64
        );
    }
    Ok(())
}
