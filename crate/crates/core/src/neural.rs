//! Small fully-connected regression networks.
//!
//! Hidden layers use ReLU, the output layer is linear. The loss is the mean
//! squared error over batch and outputs plus `l2_factor · Σ w²` over weight
//! matrices (biases are not penalized). Training is mini-batch Adam with a
//! seeded per-epoch shuffle and best-validation-epoch checkpointing.
//!
//! Weights are stored as `fan_in × fan_out` matrices so a batch forward pass
//! is `X · W + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "passby-fcnn";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FcnnFile", try_from = "FcnnFile")]
pub struct Fcnn {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    l2_factor: f64,
}

/// Gradient of the loss, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// A source of (input, target) pairs. Implementations may assemble inputs
/// lazily so that large context-feature sets never have to be materialized.
pub trait Samples {
    fn len(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn write_input(&self, index: usize, out: &mut [f64]);
    fn write_target(&self, index: usize, out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense in-memory batch, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Shape(format!("{} inputs but {} targets", inputs.nrows(), targets.nrows())));
        }
        Ok(Self { inputs, targets })
    }

    /// Single-output convenience constructor.
    pub fn scalar(inputs: Array2<f64>, targets: &[f64]) -> Result<Self> {
        let t =
            Array2::from_shape_vec((targets.len(), 1), targets.to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(inputs, t)
    }
}

impl Samples for Batch {
    fn len(&self) -> usize {
        self.inputs.nrows()
    }

    fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    fn write_input(&self, index: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.inputs.row(index)) {
            *o = *v;
        }
    }

    fn write_target(&self, index: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.targets.row(index)) {
            *o = *v;
        }
    }
}

impl Fcnn {
    /// He-uniform weights, zero biases.
    pub fn new(layer_sizes: &[usize], l2_factor: f64, seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        if !(l2_factor >= 0.0 && l2_factor.is_finite()) {
            return Err(Error::Config(format!("l2 factor must be >= 0, got {l2_factor}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng)));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases, l2_factor })
    }

    pub fn from_parameters(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>, l2_factor: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Shape("need one bias vector per weight matrix".into()));
        }
        let mut sizes = vec![weights[0].nrows()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != *sizes.last().unwrap() || b.len() != w.ncols() {
                return Err(Error::Shape(format!("layer {i} parameters do not chain")));
            }
            sizes.push(w.ncols());
        }
        check_sizes(&sizes)?;
        Ok(Self { layer_sizes: sizes, weights, biases, l2_factor })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn l2_factor(&self) -> f64 {
        self.l2_factor
    }

    pub fn set_l2_factor(&mut self, l2: f64) {
        self.l2_factor = l2;
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Adds `alpha · g` to every parameter.
    pub fn add_scaled(&mut self, alpha: f64, g: &Gradients) {
        for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
            w.scaled_add(alpha, gw);
        }
        for (b, gb) in self.biases.iter_mut().zip(&g.biases) {
            b.scaled_add(alpha, gb);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input has length {}, network expects {}", x.len(), self.input_dim())));
        }
        let row = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        Ok(self.forward_batch(row)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} columns, network expects {}", x.ncols(), self.input_dim())));
        }
        let last = self.weights.len() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = a.dot(w) + b;
            if l < last {
                a.mapv_inplace(relu);
            }
        }
        Ok(a)
    }

    fn penalty(&self) -> f64 {
        self.l2_factor * self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
    }

    /// Mean squared error plus the L2 weight penalty.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let pred = self.forward_batch(batch.inputs.view())?;
        Ok(mse(&pred, &batch.targets) + self.penalty())
    }

    /// Exact gradient of [`Fcnn::loss`]. The ReLU derivative at 0 is 0.
    pub fn backward(&self, batch: &Batch) -> Result<Gradients> {
        self.check_batch(batch)?;
        Ok(self.loss_and_gradients(batch.inputs.view(), batch.targets.view()).1)
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.inputs.nrows() == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        if batch.inputs.ncols() != self.input_dim() || batch.targets.ncols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "batch is {}→{}, network is {}→{}",
                batch.inputs.ncols(),
                batch.targets.ncols(),
                self.input_dim(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Returns (loss, gradients) for one batch.
    fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> (f64, Gradients) {
        let n_layers = self.weights.len();
        // pre-activations z_l and activations a_l (a_0 = x)
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(x.to_owned());
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = activations[l].dot(w) + b;
            let a = if l + 1 < n_layers { z.mapv(relu) } else { z.clone() };
            pre.push(z);
            activations.push(a);
        }
        let pred = &activations[n_layers];
        let scale = 2.0 / (pred.len() as f64);
        let mut delta = (pred - &y) * scale;
        let loss = mse(pred, &y.to_owned()) + self.penalty();

        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            let mut g = activations[l].t().dot(&delta);
            g.scaled_add(2.0 * self.l2_factor, &self.weights[l]);
            gw[l] = g;
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l].t());
                Zip::from(&mut prev).and(&pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        (loss, Gradients { weights: gw, biases: gb })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let n = pred.len() as f64;
    pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config("a network needs at least an input and an output layer".into()));
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Config(format!("layer {i} has zero units")));
    }
    Ok(())
}

/// Versioned on-disk form. Weight matrices are flattened row-major
/// (`fan_in` rows of `fan_out` values).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcnnFile {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub l2_factor: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<Fcnn> for FcnnFile {
    fn from(net: Fcnn) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            layer_sizes: net.layer_sizes,
            l2_factor: net.l2_factor,
            weights: net.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: net.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }
}

impl TryFrom<FcnnFile> for Fcnn {
    type Error = Error;

    fn try_from(f: FcnnFile) -> Result<Self> {
        if f.format != FORMAT || f.version != VERSION {
            return Err(Error::Schema(format!("expected {FORMAT} v{VERSION}, found {} v{}", f.format, f.version)));
        }
        check_sizes(&f.layer_sizes)?;
        if f.weights.len() != f.layer_sizes.len() - 1 || f.biases.len() != f.weights.len() {
            return Err(Error::Schema("layer count does not match layer_sizes".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, (w, b)) in f.weights.into_iter().zip(f.biases).enumerate() {
            let shape = (f.layer_sizes[l], f.layer_sizes[l + 1]);
            weights
                .push(Array2::from_shape_vec(shape, w).map_err(|e| Error::Schema(format!("layer {l} weights: {e}")))?);
            if b.len() != shape.1 {
                return Err(Error::Schema(format!("layer {l} bias has wrong length")));
            }
            biases.push(Array1::from(b));
        }
        Fcnn::from_parameters(weights, biases, f.l2_factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 64, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, adam_epsilon: 1e-8, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: i32,
}

impl Adam {
    fn new(net: &Fcnn) -> Self {
        let zw = || net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect::<Vec<_>>();
        let zb = || net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect::<Vec<_>>();
        Self { m_w: zw(), v_w: zw(), m_b: zb(), v_b: zb(), step: 0 }
    }

    fn update(&mut self, net: &mut Fcnn, g: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let (lr, eps) = (cfg.learning_rate, cfg.adam_epsilon);
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            Zip::from(&mut net.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .and(&g.weights[l])
                .for_each(|p, m, v, &g| apply(p, m, v, g));
            Zip::from(&mut net.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .and(&g.biases[l])
                .for_each(|p, m, v, &g| apply(p, m, v, g));
        }
    }
}

fn fill_batch<S: Samples + ?Sized>(data: &S, indices: &[usize], x: &mut Array2<f64>, y: &mut Array2<f64>) {
    for (r, &i) in indices.iter().enumerate() {
        data.write_input(i, x.row_mut(r).as_slice_mut().expect("standard layout"));
        data.write_target(i, y.row_mut(r).as_slice_mut().expect("standard layout"));
    }
}

/// Mean loss (MSE + penalty) over a whole sample set.
pub fn evaluate<S: Samples + ?Sized>(net: &Fcnn, data: &S) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("empty sample set".into()));
    }
    const CHUNK: usize = 512;
    let (d_in, d_out) = (data.input_dim(), data.output_dim());
    let mut sq = 0.0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        let mut x = Array2::zeros((chunk.len(), d_in));
        let mut y = Array2::zeros((chunk.len(), d_out));
        fill_batch(data, chunk, &mut x, &mut y);
        let pred = net.forward_batch(x.view())?;
        sq += pred.iter().zip(y.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
    }
    Ok(sq / (data.len() * d_out) as f64 + net.penalty())
}

/// Predicts every sample of a set, returning `len × output_dim`.
pub fn predict_all<S: Samples + ?Sized>(net: &Fcnn, data: &S) -> Result<Array2<f64>> {
    const CHUNK: usize = 512;
    let d_in = data.input_dim();
    let mut out = Array2::zeros((data.len(), net.output_dim()));
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut buf = vec![0.0; d_in];
    for chunk in idx.chunks(CHUNK) {
        let mut x = Array2::zeros((chunk.len(), d_in));
        for (r, &i) in chunk.iter().enumerate() {
            data.write_input(i, &mut buf);
            x.row_mut(r).assign(&ndarray::ArrayView1::from(&buf[..]));
        }
        let pred = net.forward_batch(x.view())?;
        out.slice_mut(ndarray::s![chunk[0]..chunk[0] + chunk.len(), ..]).assign(&pred);
    }
    Ok(out)
}

/// Mini-batch Adam. Returns the network from the epoch with the lowest
/// validation loss (earliest on ties) together with the loss history.
pub fn train<S, V>(net: &Fcnn, train_set: &S, val_set: &V, cfg: &TrainConfig) -> Result<(Fcnn, TrainReport)>
where
    S: Samples + ?Sized,
    V: Samples + ?Sized,
{
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Input("training and validation sets must be non-empty".into()));
    }
    for data in [train_set.input_dim(), val_set.input_dim()] {
        if data != net.input_dim() {
            return Err(Error::Shape(format!("samples have {data} inputs, network expects {}", net.input_dim())));
        }
    }

    let mut net = net.clone();
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let (d_in, d_out) = (net.input_dim(), net.output_dim());
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut best = net.clone();
    let mut best_val = f64::INFINITY;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut x = Array2::zeros((chunk.len(), d_in));
            let mut y = Array2::zeros((chunk.len(), d_out));
            fill_batch(train_set, chunk, &mut x, &mut y);
            let (loss, grads) = net.loss_and_gradients(x.view(), y.view());
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            weighted += loss * chunk.len() as f64;
            adam.update(&mut net, &grads, cfg);
        }
        let train_loss = weighted / train_set.len() as f64;
        let val_loss = evaluate(&net, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        if val_loss < best_val {
            best_val = val_loss;
            best = net.clone();
            report.best_epoch = epoch;
        }
    }
    Ok((best, report))
}
