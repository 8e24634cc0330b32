//! Shared test oracles.
#![allow(dead_code)]

use ndarray::Array2;

/// Solution of the ε-SVR dual by accelerated projected gradient, in the
/// same standardized units as the model.
pub struct Oracle {
    pub coef: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> (Vec<f64>, f64) {
        let a: Vec<f64> = v.iter().zip(y).map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c)).collect();
        let s = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
        (a, s)
    };
    // s(lambda) is non-increasing.
    let (mut lo, mut hi) = (-1.0, 1.0);
    while at(lo).1 < 0.0 {
        lo *= 2.0;
    }
    while at(hi).1 > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi)).0
}

pub fn oracle(k: &Array2<f64>, z: &[f64], c: f64, eps: f64) -> Oracle {
    let n = z.len();
    let m = 2 * n;
    let y: Vec<f64> = (0..m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..m).map(|i| if i < n { eps - z[i] } else { eps + z[i - n] }).collect();
    let q = |s: usize, t: usize| y[s] * y[t] * k[[s % n, t % n]];
    let gershgorin = (0..n).map(|i| (0..n).map(|j| k[[i, j]].abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / (2.0 * gershgorin);
    let grad = |a: &[f64]| -> Vec<f64> { (0..m).map(|s| (0..m).map(|t| q(s, t) * a[t]).sum::<f64>() + p[s]).collect() };
    let obj = |a: &[f64]| -> f64 {
        let g: f64 = (0..m).map(|s| a[s] * (0..m).map(|t| q(s, t) * a[t]).sum::<f64>()).sum();
        0.5 * g + a.iter().zip(&p).map(|(x, y)| x * y).sum::<f64>()
    };

    let mut a = vec![0.0; m];
    let mut w = a.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let g = grad(&w);
        let v: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
        let next = project(&v, &y, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        w = next.iter().zip(&a).map(|(x, xo)| x + mom * (x - xo)).collect();
        let delta = next.iter().zip(&a).map(|(x, xo)| (x - xo).abs()).fold(0.0, f64::max);
        a = next;
        t = t_next;
        if delta < 1e-14 {
            break;
        }
    }

    let coef: Vec<f64> = (0..n).map(|i| a[i] - a[i + n]).collect();
    let f: Vec<f64> = (0..n).map(|i| (0..n).map(|j| coef[j] * k[[i, j]]).sum()).collect();
    // Bias from free variables, else the midpoint of the feasible interval.
    let tol = 1e-7 * c.max(1.0);
    let mut free = Vec::new();
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let (ap, an) = (a[i], a[i + n]);
        let r = z[i] - f[i];
        if ap > tol && ap < c - tol {
            free.push(r - eps);
        }
        if an > tol && an < c - tol {
            free.push(r + eps);
        }
        // α at 0 needs f + b ≥ z - ε, α at C needs f + b ≤ z - ε; mirrored for α*.
        if ap <= tol {
            lower = lower.max(r - eps);
        } else if ap >= c - tol {
            upper = upper.min(r - eps);
        }
        if an <= tol {
            upper = upper.min(r + eps);
        } else if an >= c - tol {
            lower = lower.max(r + eps);
        }
    }
    let bias = if free.is_empty() { 0.5 * (lower + upper) } else { free.iter().sum::<f64>() / free.len() as f64 };
    Oracle { coef, bias, objective: obj(&a) }
}

/// Largest relative difference between backprop and central finite
/// differences over every parameter of `net`. Gradients smaller than `floor`
/// are compared in absolute terms.
pub fn gradient_check(net: &passby::neural::Fcnn, batch: &passby::neural::Batch, h: f64, floor: f64) -> f64 {
    let analytic = net.backward(batch).unwrap();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut compare = |a: f64, n: f64| {
        worst = worst.max((a - n).abs() / (a.abs().max(n.abs())).max(floor));
    };
    for l in 0..net.weights().len() {
        for idx in 0..net.weights()[l].len() {
            let (r, c) = (idx / net.weights()[l].ncols(), idx % net.weights()[l].ncols());
            let orig = net.weights()[l][[r, c]];
            probe.weights_mut()[l][[r, c]] = orig + h;
            let up = probe.loss(batch).unwrap();
            probe.weights_mut()[l][[r, c]] = orig - h;
            let down = probe.loss(batch).unwrap();
            probe.weights_mut()[l][[r, c]] = orig;
            compare(analytic.weights[l][[r, c]], (up - down) / (2.0 * h));
        }
        for k in 0..net.biases()[l].len() {
            let orig = net.biases()[l][k];
            probe.biases_mut()[l][k] = orig + h;
            let up = probe.loss(batch).unwrap();
            probe.biases_mut()[l][k] = orig - h;
            let down = probe.loss(batch).unwrap();
            probe.biases_mut()[l][k] = orig;
            compare(analytic.biases[l][k], (up - down) / (2.0 * h));
        }
    }
    worst
}

/// Random network and batch for gradient checks.
pub fn random_net_and_batch(
    layers: &[usize],
    l2: f64,
    seed: u64,
    n: usize,
) -> (passby::neural::Fcnn, passby::neural::Batch) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut net = passby::neural::Fcnn::new(layers, l2, seed).unwrap();
    // Non-zero biases so that ReLU units sit away from their kink.
    for b in net.biases_mut() {
        b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let x = Array2::from_shape_fn((n, layers[0]), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((n, *layers.last().unwrap()), |_| rng.random_range(-1.0..1.0));
    (net, passby::neural::Batch::new(x, y).unwrap())
}

/// A few short clips per vehicle, for end-to-end plumbing tests.
pub fn tiny_dataset(
    dir: &std::path::Path,
    n_vehicles: usize,
    clips: usize,
    noise: usize,
    seed: u64,
) -> passby::audio_io::Manifest {
    let mut spec = passby::synthgen::SynthDatasetSpec::ten_vehicles(dir, seed);
    spec.vehicles.truncate(n_vehicles);
    spec.clips_per_vehicle = clips;
    spec.noise_clips = noise;
    spec.duration_s = 3.0;
    spec.t_cpa_range_s = [1.2, 1.8];
    passby::synthgen::synth_dataset(&spec).unwrap()
}

/// Smallest useful cross-validation config.
pub fn tiny_config() -> passby::harness::ExperimentConfig {
    let mut cfg = passby::harness::ExperimentConfig::benchmark();
    cfg.detector.stage1_hidden = vec![8];
    cfg.detector.stage1_train.epochs = 2;
    cfg.detector.stage2_hidden = vec![4];
    cfg.detector.stage2_train.epochs = 2;
    cfg
}
