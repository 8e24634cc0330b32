//! ε-support-vector regression trained by sequential minimal optimization.
//!
//! The dual is written over `2n` variables `β = [α; α*]` with labels
//! `y = [+1…; -1…]`:
//!
//! ```text
//! min ½ βᵀQβ + pᵀβ   s.t.  yᵀβ = 0,  0 ≤ β ≤ C
//! Q_st = y_s y_t K(x_s, x_t),  p = [ε - z; ε + z]
//! ```
//!
//! Each iteration picks the maximal-violating pair with second-order working
//! set selection and solves the two-variable subproblem analytically. The
//! regression function is `f(x) = Σ (α_i - α*_i) K(x_i, x) + b`.
//!
//! Features and targets are standardized with training statistics inside the
//! model, so `C` and `ε` act on unit-variance targets.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean_std, Standardizer};

const FORMAT: &str = "passby-svr";
const VERSION: u32 = 1;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    /// `exp(-γ‖a - b‖²)`. `None` selects `γ = 1 / (d · var(X))` on the
    /// standardized training features.
    Rbf {
        gamma: Option<f64>,
    },
    Linear,
}

/// Kernel with its parameter resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FittedKernel {
    Rbf { gamma: f64 },
    Linear,
}

impl FittedKernel {
    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            FittedKernel::Linear => a.dot(&b),
            FittedKernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    /// Kernel matrix between the rows of `a` and the rows of `b`.
    pub fn matrix(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut k = a.dot(&b.t());
        if let FittedKernel::Rbf { gamma } = *self {
            let na: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
            let nb: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
            for ((i, j), v) in k.indexed_iter_mut() {
                let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
                *v = (-gamma * d2).exp();
            }
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: Kernel,
    /// Stop when the maximal KKT violation drops to this value.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self { c: 150.0, epsilon: 0.1, kernel: Kernel::Rbf { gamma: None }, tolerance: 1e-3, max_iter: 1_000_000 }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if let Kernel::Rbf { gamma: Some(g) } = self.kernel {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Solution of the dual on an explicit kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// `α_i - α*_i` for every training point.
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Value of `½ βᵀQβ + pᵀβ` at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs SMO on a precomputed kernel matrix with targets `z`.
pub fn solve_dual(
    kernel: &Array2<f64>,
    z: &[f64],
    c: f64,
    epsilon: f64,
    tolerance: f64,
    max_iter: usize,
) -> DualSolution {
    let n = z.len();
    assert_eq!(kernel.dim(), (n, n), "kernel matrix must be n × n");
    let m = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let point = |t: usize| if t < n { t } else { t - n };
    let p: Vec<f64> = (0..m).map(|t| if t < n { epsilon - z[t] } else { epsilon + z[t - n] }).collect();
    let diag: Vec<f64> = (0..n).map(|i| kernel[[i, i]]).collect();
    let q = |s: usize, t: usize| sign(s) * sign(t) * kernel[[point(s), point(t)]];

    let mut beta = vec![0.0; m];
    let mut grad = p.clone();
    let objective = |beta: &[f64], grad: &[f64]| -> f64 {
        0.5 * beta.iter().zip(grad).zip(&p).map(|((b, g), pp)| b * (g + pp)).sum::<f64>()
    };

    let up = |t: usize, b: f64| if t < n { b < c } else { b > 0.0 };
    let low = |t: usize, b: f64| if t < n { b > 0.0 } else { b < c };

    let mut iterations = 0;
    let mut converged = false;
    let mut last_obj: f64 = 0.0;
    while iterations < max_iter {
        // i: maximal -y G over I_up
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..m {
            if up(t, beta[t]) {
                let v = -sign(t) * grad[t];
                if v > g_max {
                    g_max = v;
                    i_sel = t;
                }
            }
        }
        // j: second-order choice over I_low
        let mut g_min = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_gain = f64::INFINITY;
        for t in 0..m {
            if !low(t, beta[t]) {
                continue;
            }
            let v = -sign(t) * grad[t];
            if v < g_min {
                g_min = v;
            }
            if i_sel != usize::MAX {
                let b = g_max - v;
                if b > 0.0 {
                    let a = diag[point(i_sel)] + diag[point(t)] - 2.0 * kernel[[point(i_sel), point(t)]];
                    let a = if a > 0.0 { a } else { TAU };
                    let gain = -(b * b) / a;
                    if gain < best_gain {
                        best_gain = gain;
                        j_sel = t;
                    }
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || g_max - g_min < tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (beta[i], beta[j]);
        let q_ij = q(i, j);
        if sign(i) != sign(j) {
            let quad = diag[point(i)] + diag[point(j)] + 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let quad = diag[point(i)] + diag[point(j)] - 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }

        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }

        if cfg!(debug_assertions) {
            let obj = objective(&beta, &grad);
            debug_assert!(
                obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()),
                "dual objective increased from {last_obj} to {obj}"
            );
            last_obj = obj;
        }
    }

    // bias from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..m {
        let yg = sign(t) * grad[t];
        let at_upper = beta[t] >= c;
        let at_lower = beta[t] <= 0.0;
        if at_upper {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { 0.5 * (ub + lb) };

    DualSolution {
        coef: (0..n).map(|i| beta[i] - beta[i + n]).collect(),
        bias: -rho,
        objective: objective(&beta, &grad),
        iterations,
        converged,
    }
}

/// Trained regressor. Support vectors are stored standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub format: String,
    pub version: u32,
    pub kernel: FittedKernel,
    pub c: f64,
    pub epsilon: f64,
    pub x_scaler: Standardizer,
    pub y_mean: f64,
    pub y_std: f64,
    pub support_vectors: Vec<Vec<f64>>,
    pub support_indices: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_data(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} feature rows but {} targets", x.nrows(), y.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::Input("SVR needs at least two training points".into()));
    }
    let mut problems = Vec::new();
    for (i, row) in x.rows().into_iter().enumerate() {
        if !row.iter().all(|v| v.is_finite()) {
            problems.push(format!("row {i}: non-finite feature"));
        }
    }
    for (i, v) in y.iter().enumerate() {
        if !v.is_finite() {
            problems.push(format!("target {i}: non-finite value {v}"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}

pub fn svr_train(x: ArrayView2<'_, f64>, y: &[f64], cfg: &SvrConfig) -> Result<SvrModel> {
    cfg.validate()?;
    check_data(x, y)?;
    let dim = x.ncols();
    let mut xs = x.as_standard_layout().into_owned();
    let x_scaler = Standardizer::fit(dim, xs.rows().into_iter().map(|r| r.to_slice().expect("row-major")))?;
    for mut row in xs.axis_iter_mut(Axis(0)) {
        x_scaler.transform_in_place(row.as_slice_mut().expect("row-major"));
    }
    let (y_mean, y_std) = mean_std(y);
    let y_std = if y_std > 1e-12 { y_std } else { 1.0 };
    let z: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();

    let kernel = match cfg.kernel {
        Kernel::Linear => FittedKernel::Linear,
        Kernel::Rbf { gamma: Some(g) } => FittedKernel::Rbf { gamma: g },
        Kernel::Rbf { gamma: None } => {
            let (_, s) = mean_std(xs.as_slice().expect("owned"));
            let var = if s * s > 1e-12 { s * s } else { 1.0 };
            FittedKernel::Rbf { gamma: 1.0 / (dim as f64 * var) }
        }
    };
    let k = kernel.matrix(xs.view(), xs.view());
    let sol = solve_dual(&k, &z, cfg.c, cfg.epsilon, cfg.tolerance, cfg.max_iter);

    let support_indices: Vec<usize> = (0..y.len()).filter(|&i| sol.coef[i] != 0.0).collect();
    Ok(SvrModel {
        format: FORMAT.into(),
        version: VERSION,
        kernel,
        c: cfg.c,
        epsilon: cfg.epsilon,
        x_scaler,
        y_mean,
        y_std,
        support_vectors: support_indices.iter().map(|&i| xs.row(i).to_vec()).collect(),
        coefficients: support_indices.iter().map(|&i| sol.coef[i]).collect(),
        support_indices,
        bias: sol.bias,
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

impl SvrModel {
    pub fn dim(&self) -> usize {
        self.x_scaler.dim()
    }

    /// Regression function in standardized target units, on a standardized
    /// input.
    pub fn decision(&self, xs: &[f64]) -> f64 {
        let x = ArrayView1::from(xs);
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * self.kernel.eval(ArrayView1::from(sv.as_slice()), x))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("feature vector has length {}, model expects {}", x.len(), self.dim())));
        }
        let xs = self.x_scaler.transform(x);
        Ok(self.decision(&xs) * self.y_std + self.y_mean)
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        x.rows().into_iter().map(|r| self.predict(&r.to_vec())).collect()
    }

    /// Dual coefficient of every training point (zero for non-support
    /// vectors).
    pub fn dense_coefficients(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &c) in self.support_indices.iter().zip(&self.coefficients) {
            if i < n {
                out[i] = c;
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.format != FORMAT || model.version != VERSION {
            return Err(Error::Schema(format!(
                "expected {FORMAT} v{VERSION}, found {} v{}",
                model.format, model.version
            )));
        }
        Ok(model)
    }
}

pub fn svr_predict(model: &SvrModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// KKT violation of one point given its coefficient and residual
/// `r = z - f(x)` in standardized units.
pub fn point_violation(coef: f64, residual: f64, c: f64, epsilon: f64) -> f64 {
    if coef == 0.0 {
        (residual.abs() - epsilon).max(0.0)
    } else if coef >= c {
        (epsilon - residual).max(0.0)
    } else if coef <= -c {
        (residual + epsilon).max(0.0)
    } else if coef > 0.0 {
        (residual - epsilon).abs()
    } else {
        (residual + epsilon).abs()
    }
}

/// Maximum KKT violation of `model` over its training data, in standardized
/// target units.
pub fn kkt_violation(model: &SvrModel, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<f64> {
    check_data(x, y)?;
    let coef = model.dense_coefficients(y.len());
    let mut worst: f64 = 0.0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let xs = model.x_scaler.transform(&row.to_vec());
        let z = (y[i] - model.y_mean) / model.y_std;
        let r = z - model.decision(&xs);
        worst = worst.max(point_violation(coef[i], r, model.c, model.epsilon));
    }
    Ok(worst)
}
