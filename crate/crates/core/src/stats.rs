//! Per-dimension standardization and small summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero-mean, unit-variance scaling fitted on training data. Dimensions with
/// zero variance are only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Fits on rows produced by `rows`, using population variance.
    pub fn fit<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut acc = StandardizerFit::new(dim);
        for row in rows {
            acc.push(row)?;
        }
        acc.finish()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_in_place(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.transform_in_place(&mut out);
        out
    }
}

/// Streaming fit for [`Standardizer`]. Sums are shifted by the first row so
/// the one-pass variance stays well conditioned.
#[derive(Debug, Clone)]
pub struct StandardizerFit {
    n: usize,
    shift: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl StandardizerFit {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, shift: Vec::new(), sum: vec![0.0; dim], sum_sq: vec![0.0; dim] }
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        let dim = self.sum.len();
        if row.len() != dim {
            return Err(Error::Shape(format!("row has {} values, expected {dim}", row.len())));
        }
        if self.n == 0 {
            self.shift = row.to_vec();
        }
        self.n += 1;
        for (k, (&x, &s)) in row.iter().zip(&self.shift).enumerate() {
            let d = x - s;
            self.sum[k] += d;
            self.sum_sq[k] += d * d;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Standardizer> {
        if self.n == 0 {
            return Err(Error::Input("cannot fit a scaler on zero rows".into()));
        }
        let nf = self.n as f64;
        let mut mean = Vec::with_capacity(self.sum.len());
        let mut std = Vec::with_capacity(self.sum.len());
        for k in 0..self.sum.len() {
            let m = self.sum[k] / nf;
            let var = (self.sum_sq[k] / nf - m * m).max(0.0);
            mean.push(self.shift[k] + m);
            let s = var.sqrt();
            std.push(if s > 1e-12 { s } else { 1.0 });
        }
        Ok(Standardizer { mean, std })
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mixes a master seed with a path of labels (iteration, fold, purpose, ...)
/// into an independent child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_columns() {
        let rows = [vec![1.0, 5.0, 3.0], vec![3.0, 5.0, 9.0], vec![5.0, 5.0, 6.0]];
        let s = Standardizer::fit(3, rows.iter().map(|r| r.as_slice())).unwrap();
        assert!((s.mean[0] - 3.0).abs() < 1e-12);
        assert!((s.std[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.std[1], 1.0);
        let z = s.transform(&rows[0]);
        assert_eq!(z[1], 0.0);
        let (m, sd) = mean_std(&[2.0, 4.0]);
        assert_eq!((m, sd), (3.0, 1.0));
    }

    #[test]
    fn derived_seeds_differ_by_path() {
        let a = derive_seed(7, &[0, 1]);
        assert_eq!(a, derive_seed(7, &[0, 1]));
        assert_ne!(a, derive_seed(7, &[1, 0]));
        assert_ne!(a, derive_seed(8, &[0, 1]));
        assert_ne!(derive_seed(7, &[]), derive_seed(7, &[0]));
    }
}
