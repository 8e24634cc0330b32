//! Epsilon-SVR with an RBF kernel on a noisy sine, and a check of the
//! optimality conditions of the solution.

use ndarray::Array2;
use passby::svr::{kkt_violation, svr_train, SvrConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> passby::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 120;
    let x = Array2::from_shape_fn((n, 1), |(i, _)| 6.0 * i as f64 / n as f64);
    let y: Vec<f64> = x.column(0).iter().map(|&t| 50.0 + 20.0 * t.sin() + rng.random_range(-2.0..2.0)).collect();

    let cfg = SvrConfig::default();
    let model = svr_train(x.view(), &y, &cfg)?;
    println!(
        "{} support vectors of {n} points, {} SMO iterations, converged: {}",
        model.support_vectors.len(),
        model.iterations,
        model.converged
    );
    println!("largest KKT violation {:.2e}", kkt_violation(&model, x.view(), &y)?);
    for t in [0.5, 1.5, 3.0, 4.7] {
        println!("x = {t}: truth {:.2}, prediction {:.2}", 50.0 + 20.0 * f64::sin(t), model.predict(&[t])?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> passby::Result<()> {
    run_example()
}
