//! Short-time power spectra and the three mel representations.
//!
//! * **MS**: power spectrogram projected onto a triangular mel filterbank.
//! * **LMS**: `10·log10(max(MS, 1e-10))`.
//! * **MFCC**: orthonormal DCT-II of each LMS frame, all coefficients kept.
//!
//! Framing is centered: frame `f` is the window centered on sample `f·hop`,
//! with reflect padding at both ends, so a clip of `L` samples has
//! `1 + (L - 1) / hop` frames.

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

/// Floor applied before taking the logarithm of the mel spectrogram.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: 4096, hop: 1105 }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.window_len.is_power_of_two() || self.window_len < 2 {
            return Err(Error::Config(format!("window length {} is not a power of two", self.window_len)));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config(format!("hop {} must be in 1..={}", self.hop, self.window_len)));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples == 0 {
            0
        } else {
            1 + (n_samples - 1) / self.hop
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mel: usize,
    pub f_low: f64,
    pub f_high: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self { n_mel: 40, f_low: 0.0, f_high: 16_000.0 }
    }
}

/// STFT and mel settings together; everything needed to turn a clip into
/// features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    pub mel: MelConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Ms,
    Lms,
    Mfcc,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Ms, FeatureKind::Lms, FeatureKind::Mfcc];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Ms => "ms",
            FeatureKind::Lms => "lms",
            FeatureKind::Mfcc => "mfcc",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ms" => Ok(FeatureKind::Ms),
            "lms" => Ok(FeatureKind::Lms),
            "mfcc" => Ok(FeatureKind::Mfcc),
            other => Err(Error::Config(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// Power spectrogram, frames × (window_len/2 + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub values: Array2<f64>,
    pub frame_period_s: f64,
    pub t0_s: f64,
}

/// Time × band matrix of one mel representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub values: Array2<f64>,
    pub frame_period_s: f64,
    pub t0_s: f64,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_bands(&self) -> usize {
        self.values.ncols()
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        self.t0_s + frame as f64 * self.frame_period_s
    }

    /// Nearest frame to time `t`, clamped to the matrix.
    pub fn frame_at(&self, t: f64) -> usize {
        let f = ((t - self.t0_s) / self.frame_period_s).round();
        if f <= 0.0 {
            0
        } else {
            (f as usize).min(self.n_frames().saturating_sub(1))
        }
    }

    pub fn expect_kind(&self, kind: FeatureKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Config(format!("expected {kind} features, got {}", self.kind)))
        }
    }
}

/// Triangular mel filters, n_mel × n_bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub weights: Array2<f64>,
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Periodic Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Computes the centered, reflect-padded power spectrogram.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.window_len);
        Ok(Self { cfg, window: hamming(cfg.window_len), fft })
    }

    pub fn power(&self, clip: &AudioClip) -> PowerSpectrogram {
        let n = self.cfg.window_len;
        let half = (n / 2) as isize;
        let samples = clip.samples();
        let len = samples.len();
        let frames = self.cfg.n_frames(len);
        let bins = self.cfg.n_bins();
        let mut values = Array2::zeros((frames, bins));
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];

        for (f, mut row) in values.axis_iter_mut(Axis(0)).enumerate() {
            let start = (f * self.cfg.hop) as isize - half;
            for (k, slot) in buf.iter_mut().enumerate() {
                let idx = start + k as isize;
                let s = if idx >= 0 && (idx as usize) < len {
                    samples[idx as usize]
                } else {
                    samples[reflect_index(idx, len)]
                };
                *slot = Complex::new(s as f64 * self.window[k], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (out, c) in row.iter_mut().zip(&buf) {
                *out = c.norm_sqr();
            }
        }

        PowerSpectrogram { values, frame_period_s: self.cfg.hop as f64 / clip.sample_rate() as f64, t0_s: 0.0 }
    }
}

pub fn stft_power(clip: &AudioClip, cfg: StftConfig) -> Result<PowerSpectrogram> {
    Ok(Stft::new(cfg)?.power(clip))
}

/// Builds HTK-style triangular filters with peaks equally spaced in mel.
/// Edge frequencies above Nyquist are clamped to Nyquist.
pub fn build_mel_filterbank(mel: &MelConfig, stft: &StftConfig, sample_rate: u32) -> Result<FilterBank> {
    stft.validate()?;
    if mel.n_mel == 0 {
        return Err(Error::Config("n_mel must be at least 1".into()));
    }
    if !(mel.f_low >= 0.0 && mel.f_low < mel.f_high) {
        return Err(Error::Config(format!("mel range [{}, {}] is empty", mel.f_low, mel.f_high)));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let (m_lo, m_hi) = (hz_to_mel(mel.f_low), hz_to_mel(mel.f_high));
    let edges: Vec<f64> = (0..mel.n_mel + 2)
        .map(|i| {
            let m = m_lo + (m_hi - m_lo) * i as f64 / (mel.n_mel + 1) as f64;
            mel_to_hz(m).min(nyquist)
        })
        .collect();

    let bins = stft.n_bins();
    let bin_hz = sample_rate as f64 / stft.window_len as f64;
    let mut weights = Array2::zeros((mel.n_mel, bins));
    for (m, mut row) in weights.axis_iter_mut(Axis(0)).enumerate() {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
        }
        if row.sum() <= 0.0 {
            return Err(Error::Config(format!(
                "mel filter {m} ([{lo:.1}, {hi:.1}] Hz) covers no FFT bin; reduce n_mel or increase window length"
            )));
        }
    }
    Ok(FilterBank { weights })
}

pub fn mel_spectrogram(power: &PowerSpectrogram, fb: &FilterBank) -> Result<FeatureMatrix> {
    if power.values.ncols() != fb.weights.ncols() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins but filterbank expects {}",
            power.values.ncols(),
            fb.weights.ncols()
        )));
    }
    Ok(FeatureMatrix {
        kind: FeatureKind::Ms,
        values: power.values.dot(&fb.weights.t()),
        frame_period_s: power.frame_period_s,
        t0_s: power.t0_s,
    })
}

pub fn log_mel(ms: &FeatureMatrix) -> Result<FeatureMatrix> {
    ms.expect_kind(FeatureKind::Ms)?;
    Ok(FeatureMatrix {
        kind: FeatureKind::Lms,
        values: ms.values.mapv(|v| 10.0 * v.max(LOG_FLOOR).log10()),
        frame_period_s: ms.frame_period_s,
        t0_s: ms.t0_s,
    })
}

/// Orthonormal DCT-II matrix; row `k` holds basis function `k`.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    let nf = n as f64;
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (std::f64::consts::PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * nf)).cos()
    })
}

pub fn mfcc(lms: &FeatureMatrix) -> Result<FeatureMatrix> {
    lms.expect_kind(FeatureKind::Lms)?;
    let d = dct_matrix(lms.n_bands());
    Ok(FeatureMatrix {
        kind: FeatureKind::Mfcc,
        values: lms.values.dot(&d.t()),
        frame_period_s: lms.frame_period_s,
        t0_s: lms.t0_s,
    })
}

/// All three representations of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFeatures {
    pub ms: FeatureMatrix,
    pub lms: FeatureMatrix,
    pub mfcc: FeatureMatrix,
}

impl MelFeatures {
    pub fn get(&self, kind: FeatureKind) -> &FeatureMatrix {
        match kind {
            FeatureKind::Ms => &self.ms,
            FeatureKind::Lms => &self.lms,
            FeatureKind::Mfcc => &self.mfcc,
        }
    }
}

/// Reusable STFT plan and filterbank for clips of one sample rate.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    stft: Stft,
    sample_rate: u32,
    filterbank: FilterBank,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig, sample_rate: u32) -> Result<Self> {
        Ok(Self {
            cfg,
            stft: Stft::new(cfg.stft)?,
            sample_rate,
            filterbank: build_mel_filterbank(&cfg.mel, &cfg.stft, sample_rate)?,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &FilterBank {
        &self.filterbank
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<MelFeatures> {
        if clip.sample_rate() != self.sample_rate {
            return Err(Error::Input(format!(
                "clip sample rate {} Hz does not match extractor rate {} Hz",
                clip.sample_rate(),
                self.sample_rate
            )));
        }
        let power = self.stft.power(clip);
        let ms = mel_spectrogram(&power, &self.filterbank)?;
        let lms = log_mel(&ms)?;
        let mfcc = mfcc(&lms)?;
        Ok(MelFeatures { ms, lms, mfcc })
    }
}

/// Writes a feature matrix as CSV: a header of band indices, then one row per
/// frame.
pub fn write_feature_csv(path: impl AsRef<Path>, fm: &FeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record((0..fm.n_bands()).map(|b| b.to_string()))?;
    for row in fm.values.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sine(freq: f64, n: usize, sr: u32) -> AudioClip {
        let samples = (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32).collect();
        AudioClip::new(samples, sr).unwrap()
    }

    #[test]
    fn ten_second_clip_has_400_frames() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.n_frames(441_000), 400);
        let clip = AudioClip::new(vec![0.0; 441_000], 44_100).unwrap();
        let p = stft_power(&clip, cfg).unwrap();
        assert_eq!(p.values.dim(), (400, 2049));
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_formula() {
        let cfg = StftConfig { window_len: 16, hop: 5 };
        for len in 1..60 {
            let clip = AudioClip::new(vec![0.1; len], 8000).unwrap();
            let p = stft_power(&clip, cfg).unwrap();
            assert_eq!(p.values.nrows(), 1 + (len - 1) / 5);
        }
    }

    #[test]
    fn bin_centered_sine_peak() {
        // sr/N = 8000/256 per bin, bin 20
        let (sr, n) = (8000u32, 256usize);
        let k = 20usize;
        let clip = sine(k as f64 * sr as f64 / n as f64, 4000, sr);
        let p = stft_power(&clip, StftConfig { window_len: n, hop: 64 }).unwrap();
        let expected = (hamming(n).iter().sum::<f64>() / 2.0).powi(2);
        for f in 4..p.values.nrows() - 4 {
            let row = p.values.row(f);
            let argmax = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(argmax, k);
            assert_relative_eq!(row[k], expected, max_relative = 1e-6);
        }
    }

    #[test]
    fn mel_formula() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert_relative_eq!(hz_to_mel(700.0), 2595.0 * 2f64.log10(), epsilon = 1e-12);
        assert_relative_eq!(hz_to_mel(700.0), 781.17, epsilon = 0.005);
        assert_relative_eq!(mel_to_hz(hz_to_mel(1234.5)), 1234.5, epsilon = 1e-9);
    }

    #[test]
    fn default_filterbank() {
        let fb = build_mel_filterbank(&MelConfig::default(), &StftConfig::default(), 44_100).unwrap();
        assert_eq!(fb.weights.dim(), (40, 2049));
        let bin_hz = 44_100.0 / 4096.0;
        for row in fb.weights.rows() {
            assert!(row.sum() > 0.0);
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
        }
        for (k, col) in fb.weights.columns().into_iter().enumerate() {
            if k as f64 * bin_hz >= 16_000.0 {
                assert!(col.iter().all(|&w| w == 0.0));
            }
        }
    }

    #[test]
    fn filterbank_clamps_at_nyquist() {
        // 16 kHz upper edge at 16 kHz sampling: edges above 8 kHz clamp
        let mel = MelConfig { n_mel: 10, f_low: 0.0, f_high: 16_000.0 };
        let stft = StftConfig { window_len: 1024, hop: 256 };
        match build_mel_filterbank(&mel, &stft, 16_000) {
            Ok(fb) => {
                for row in fb.weights.rows() {
                    assert!(row.sum() > 0.0);
                }
            }
            Err(Error::Config(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn too_many_bands_is_config_error() {
        let mel = MelConfig { n_mel: 200, f_low: 0.0, f_high: 4000.0 };
        let stft = StftConfig { window_len: 64, hop: 16 };
        assert!(matches!(build_mel_filterbank(&mel, &stft, 8000), Err(Error::Config(_))));
    }

    #[test]
    fn mel_spectrogram_basis_and_brute_force() {
        let stft = StftConfig { window_len: 64, hop: 16 };
        let mel = MelConfig { n_mel: 6, f_low: 0.0, f_high: 4000.0 };
        let fb = build_mel_filterbank(&mel, &stft, 8000).unwrap();
        let bins = stft.n_bins();

        let mut impulse = Array2::zeros((1, bins));
        impulse[[0, 7]] = 1.0;
        let ms = mel_spectrogram(&PowerSpectrogram { values: impulse, frame_period_s: 0.002, t0_s: 0.0 }, &fb).unwrap();
        for m in 0..6 {
            assert_eq!(ms.values[[0, m]], fb.weights[[m, 7]]);
        }

        let values = Array2::from_shape_fn((3, bins), |(f, k)| ((f * 31 + k * 17) % 13) as f64 * 0.37);
        let ms = mel_spectrogram(&PowerSpectrogram { values: values.clone(), frame_period_s: 0.002, t0_s: 0.0 }, &fb)
            .unwrap();
        for f in 0..3 {
            for m in 0..6 {
                let mut acc = 0.0;
                for k in 0..bins {
                    acc += values[[f, k]] * fb.weights[[m, k]];
                }
                assert_relative_eq!(ms.values[[f, m]], acc, max_relative = 1e-12);
            }
        }

        let bad = PowerSpectrogram { values: Array2::zeros((2, bins + 1)), frame_period_s: 0.1, t0_s: 0.0 };
        assert!(matches!(mel_spectrogram(&bad, &fb), Err(Error::Shape(_))));
    }

    fn ms_matrix(values: Vec<f64>) -> FeatureMatrix {
        let n = values.len();
        FeatureMatrix {
            kind: FeatureKind::Ms,
            values: Array2::from_shape_vec((1, n), values).unwrap(),
            frame_period_s: 0.025,
            t0_s: 0.0,
        }
    }

    #[test]
    fn log_mel_decibels() {
        let lms = log_mel(&ms_matrix(vec![1.0, 0.0, 100.0])).unwrap();
        assert_eq!(lms.kind, FeatureKind::Lms);
        assert_relative_eq!(lms.values[[0, 0]], 0.0);
        assert_relative_eq!(lms.values[[0, 1]], -100.0, epsilon = 1e-12);
        assert_relative_eq!(lms.values[[0, 2]], 20.0, epsilon = 1e-12);
        assert!(log_mel(&lms).is_err());
    }

    #[test]
    fn dct_is_orthonormal() {
        let d = dct_matrix(40);
        let eye = d.dot(&d.t());
        for ((i, j), v) in eye.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-9);
        }
    }

    #[test]
    fn mfcc_constant_and_inverse() {
        let c = -37.5;
        let lms = FeatureMatrix {
            kind: FeatureKind::Lms,
            values: Array2::from_elem((2, 40), c),
            frame_period_s: 0.025,
            t0_s: 0.0,
        };
        let m = mfcc(&lms).unwrap();
        assert_relative_eq!(m.values[[0, 0]], c * 40f64.sqrt(), epsilon = 1e-9);
        assert!(m.values.row(1).iter().skip(1).all(|v| v.abs() < 1e-9));

        let zero = FeatureMatrix { values: Array2::zeros((1, 40)), ..lms.clone() };
        assert!(mfcc(&zero).unwrap().values.iter().all(|&v| v == 0.0));

        let random =
            FeatureMatrix { values: Array2::from_shape_fn((1, 40), |(_, b)| ((b * 7919) % 101) as f64 - 50.0), ..lms };
        let coeffs = mfcc(&random).unwrap();
        let back = coeffs.values.dot(&dct_matrix(40));
        for (a, b) in back.iter().zip(random.values.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn bin_centered_sine_energy_is_shift_invariant() {
        let (sr, n) = (8000u32, 256usize);
        let clip = sine(13.0 * sr as f64 / n as f64, 8000, sr);
        let p = stft_power(&clip, StftConfig { window_len: n, hop: 50 }).unwrap();
        let e: Vec<f64> = p.values.rows().into_iter().map(|r| r.sum()).collect();
        for &v in &e[4..e.len() - 4] {
            assert_relative_eq!(v, e[4], max_relative = 1e-6);
        }
    }
}
