//! Fits a small fully connected network to a noisy 1-D function with Adam.

use ndarray::Array2;
use passby::neural::{evaluate, train, Batch, Fcnn, TrainConfig};

pub fn run_example() -> passby::Result<()> {
    let xs: Vec<f64> = (0..400).map(|i| -2.0 + 4.0 * i as f64 / 399.0).collect();
    let target = |x: f64| x.abs().min(0.75);
    let make = |pts: &[f64]| {
        let inputs = Array2::from_shape_vec((pts.len(), 1), pts.to_vec()).unwrap();
        let ys: Vec<f64> = pts.iter().map(|&x| target(x)).collect();
        Batch::scalar(inputs, &ys)
    };
    let train_x: Vec<f64> = xs.iter().enumerate().filter(|(i, _)| i % 5 != 0).map(|(_, x)| *x).collect();
    let val_x: Vec<f64> = xs.iter().step_by(5).copied().collect();
    let train_set = make(&train_x)?;
    let val_set = make(&val_x)?;

    let net = Fcnn::new(&[1, 16, 16, 1], 1e-5, 3)?;
    println!("initial validation loss {:.5}", evaluate(&net, &val_set)?);
    let cfg = TrainConfig { epochs: 200, batch_size: 32, learning_rate: 3e-3, ..TrainConfig::default() };
    let (net, report) = train(&net, &train_set, &val_set, &cfg)?;
    println!(
        "best epoch {} of {}, validation loss {:.5}",
        report.best_epoch + 1,
        report.val_loss.len(),
        report.val_loss[report.best_epoch]
    );
    for x in [-1.5, -0.3, 0.0, 0.4, 1.2] {
        println!("f({x:+.1}) = {:.3}, network says {:.3}", target(x), net.forward(&[x])?[0]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> passby::Result<()> {
    run_example()
}
