//! Pass-by detection by clipped vehicle-to-microphone distance (CVMD)
//! regression.
//!
//! The CVMD of a clip is `|t - t_cpa|` clipped at a threshold `T_D`; clips with
//! no vehicle have the constant curve `T_D`. Stage 1 regresses the CVMD of
//! each frame from a strided window of standardized log-mel frames. Stage 2
//! refines the curve from a window of consecutive stage-1 outputs. The CPA
//! estimate is the argmin of the refined curve and presence is decided by
//! comparing its minimum to a calibrated threshold.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio_io::ClipAnnotation;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::neural::{self, Fcnn, Samples, TrainConfig, TrainReport};
use crate::stats::{Standardizer, StandardizerFit};

const FORMAT: &str = "passby-detector";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvmdParams {
    /// Clipping threshold in seconds.
    pub t_d: f64,
}

impl Default for CvmdParams {
    fn default() -> Self {
        Self { t_d: 0.75 }
    }
}

/// Which frames feed stage 1: offsets `-q·stride, …, 0, …, q·stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub q: usize,
    pub stride: usize,
}

impl Default for ContextSpec {
    fn default() -> Self {
        Self { q: 12, stride: 3 }
    }
}

impl ContextSpec {
    pub fn frames(&self) -> usize {
        2 * self.q + 1
    }

    pub fn dim(&self, n_bands: usize) -> usize {
        self.frames() * n_bands
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("context stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvmdCurve {
    pub values: Vec<f64>,
    pub frame_period_s: f64,
    pub t0_s: f64,
}

impl CvmdCurve {
    pub fn frame_time(&self, frame: usize) -> f64 {
        self.t0_s + frame as f64 * self.frame_period_s
    }

    /// Writes `frame,time_s,cvmd_s` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["frame", "time_s", "cvmd_s"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([i.to_string(), self.frame_time(i).to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub t_cpa_hat: f64,
    pub min_cvmd: f64,
    pub vehicle_present: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresenceThreshold {
    pub threshold: f64,
    /// `min(noise minima) - max(vehicle minima)`; negative when the two sets
    /// overlap.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub cvmd: CvmdParams,
    pub context: ContextSpec,
    pub stage1_hidden: Vec<usize>,
    pub stage1_l2: f64,
    pub stage1_train: TrainConfig,
    /// Train stage 1 on every `stage1_frame_stride`-th frame of each clip.
    pub stage1_frame_stride: usize,
    /// Stage-2 input length; must be odd.
    pub stage2_window: usize,
    pub stage2_hidden: Vec<usize>,
    pub stage2_l2: f64,
    pub stage2_train: TrainConfig,
    /// When false the detector is the one-stage ablation.
    pub two_stage: bool,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            cvmd: CvmdParams::default(),
            context: ContextSpec::default(),
            stage1_hidden: vec![64, 64],
            stage1_l2: 1e-4,
            stage1_train: TrainConfig::default(),
            stage1_frame_stride: 1,
            stage2_window: 31,
            stage2_hidden: vec![31, 15],
            stage2_l2: 5e-6,
            stage2_train: TrainConfig::default(),
            two_stage: true,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.context.validate()?;
        self.stage1_train.validate()?;
        self.stage2_train.validate()?;
        if self.cvmd.t_d.is_nan() || self.cvmd.t_d <= 0.0 {
            return Err(Error::Config("T_D must be positive".into()));
        }
        if self.stage2_window.is_multiple_of(2) {
            return Err(Error::Config("stage-2 window must be odd".into()));
        }
        if self.stage1_frame_stride == 0 {
            return Err(Error::Config("stage-1 frame stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Two trained stages plus everything needed to apply them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub format: String,
    pub version: u32,
    pub cvmd: CvmdParams,
    pub context: ContextSpec,
    pub n_bands: usize,
    pub scaler: Standardizer,
    pub stage1: Fcnn,
    pub stage2_window: usize,
    pub stage2: Option<Fcnn>,
    pub presence: PresenceThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorTrainReport {
    pub stage1: TrainReport,
    pub stage2: Option<TrainReport>,
}

/// A training clip: its log-mel features and annotation.
#[derive(Debug, Clone, Copy)]
pub struct DetectorExample<'a> {
    pub lms: &'a FeatureMatrix,
    pub annotation: &'a ClipAnnotation,
}

pub fn cvmd_target(t: f64, t_cpa: f64, params: &CvmdParams) -> f64 {
    let d = (t - t_cpa).abs();
    if d < params.t_d {
        d
    } else {
        params.t_d
    }
}

/// Target curve for a clip; `None` means no vehicle (constant `T_D`).
pub fn target_curve(
    n_frames: usize,
    frame_period_s: f64,
    t0_s: f64,
    t_cpa: Option<f64>,
    params: &CvmdParams,
) -> CvmdCurve {
    let values = (0..n_frames)
        .map(|f| match t_cpa {
            Some(c) => cvmd_target(t0_s + f as f64 * frame_period_s, c, params),
            None => params.t_d,
        })
        .collect();
    CvmdCurve { values, frame_period_s, t0_s }
}

fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Writes the context vector of `frame` into `out`, edge-replicating offsets
/// that fall outside the matrix.
pub fn write_context(values: &Array2<f64>, frame: usize, spec: &ContextSpec, out: &mut [f64]) {
    let (n_frames, n_bands) = values.dim();
    let q = spec.q as isize;
    for (slot, j) in (-q..=q).enumerate() {
        let f = clamp_index(frame as isize + j * spec.stride as isize, n_frames);
        out[slot * n_bands..(slot + 1) * n_bands].iter_mut().zip(values.row(f)).for_each(|(o, v)| *o = *v);
    }
}

pub fn assemble_context(lms: &FeatureMatrix, frame: usize, spec: &ContextSpec) -> Result<Vec<f64>> {
    lms.expect_kind(FeatureKind::Lms)?;
    if frame >= lms.n_frames() {
        return Err(Error::Input(format!("frame {frame} outside a {}-frame matrix", lms.n_frames())));
    }
    let mut out = vec![0.0; spec.dim(lms.n_bands())];
    write_context(&lms.values, frame, spec, &mut out);
    Ok(out)
}

/// Stage-2 input for `frame`: `window` consecutive values centered on it,
/// edge-replicated.
pub fn write_window(curve: &[f64], frame: usize, window: usize, out: &mut [f64]) {
    let half = (window / 2) as isize;
    for (slot, j) in (-half..=half).enumerate() {
        out[slot] = curve[clamp_index(frame as isize + j, curve.len())];
    }
}

/// Global argmin, earliest frame on ties.
pub fn estimate_cpa(curve: &CvmdCurve) -> Result<(f64, f64)> {
    let (idx, min) = curve
        .values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v >= b => best,
            _ => Some((i, v)),
        })
        .ok_or_else(|| Error::Input("empty CVMD curve".into()))?;
    Ok((curve.frame_time(idx), min))
}

/// Chooses the presence threshold separating vehicle and no-vehicle CVMD
/// minima: the midpoint of the gap when the sets are separated, otherwise the
/// candidate with the fewest misclassifications (smallest on ties). A clip is
/// vehicle-present when its minimum is strictly below the threshold.
pub fn calibrate_presence_threshold(vehicle_minima: &[f64], noise_minima: &[f64]) -> Result<PresenceThreshold> {
    if vehicle_minima.is_empty() || noise_minima.is_empty() {
        return Err(Error::Input("both minima lists must be non-empty".into()));
    }
    let v_max = vehicle_minima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_min = noise_minima.iter().copied().fold(f64::INFINITY, f64::min);
    let gap = n_min - v_max;
    if gap > 0.0 {
        return Ok(PresenceThreshold { threshold: 0.5 * (v_max + n_min), gap });
    }

    let mut all: Vec<f64> = vehicle_minima.iter().chain(noise_minima).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut candidates = Vec::with_capacity(all.len() + 1);
    candidates.push(all[0]);
    candidates.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(all[all.len() - 1] + 1.0);

    let errors = |thr: f64| {
        vehicle_minima.iter().filter(|&&v| v >= thr).count() + noise_minima.iter().filter(|&&v| v < thr).count()
    };
    let mut best = (usize::MAX, f64::NAN);
    for thr in candidates {
        let e = errors(thr);
        if e < best.0 {
            best = (e, thr);
        }
    }
    Ok(PresenceThreshold { threshold: best.1, gap })
}

pub fn vehicle_present(min_cvmd: f64, threshold: f64) -> bool {
    min_cvmd < threshold
}

/// Lazily assembled stage-1 training samples.
struct ContextSamples<'a> {
    clips: Vec<&'a Array2<f64>>,
    targets: Vec<Vec<f64>>,
    index: Vec<(u32, u32)>,
    spec: ContextSpec,
    n_bands: usize,
    scaler: &'a Standardizer,
}

impl Samples for ContextSamples<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn input_dim(&self) -> usize {
        self.spec.dim(self.n_bands)
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn write_input(&self, index: usize, out: &mut [f64]) {
        let (c, f) = self.index[index];
        write_context(self.clips[c as usize], f as usize, &self.spec, out);
        self.scaler.transform_in_place(out);
    }

    fn write_target(&self, index: usize, out: &mut [f64]) {
        let (c, f) = self.index[index];
        out[0] = self.targets[c as usize][f as usize];
    }
}

/// Stage-2 samples: windows over stage-1 curves.
struct WindowSamples<'a> {
    curves: &'a [Vec<f64>],
    targets: &'a [Vec<f64>],
    index: Vec<(u32, u32)>,
    window: usize,
}

impl Samples for WindowSamples<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn input_dim(&self) -> usize {
        self.window
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn write_input(&self, index: usize, out: &mut [f64]) {
        let (c, f) = self.index[index];
        write_window(&self.curves[c as usize], f as usize, self.window, out);
    }

    fn write_target(&self, index: usize, out: &mut [f64]) {
        let (c, f) = self.index[index];
        out[0] = self.targets[c as usize][f as usize];
    }
}

fn clip_targets(examples: &[DetectorExample<'_>], params: &CvmdParams) -> Result<Vec<Vec<f64>>> {
    let mut problems = Vec::new();
    let mut out = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        if let Err(e) = ex.lms.expect_kind(FeatureKind::Lms) {
            problems.push(format!("clip {i}: {e}"));
            continue;
        }
        let t_cpa = match (ex.annotation.has_vehicle, ex.annotation.t_cpa_s) {
            (true, Some(t)) => Some(t),
            (true, None) => {
                problems.push(format!("clip {i}: vehicle clip without t_cpa_s"));
                continue;
            }
            (false, _) => None,
        };
        let lms = ex.lms;
        out.push(target_curve(lms.n_frames(), lms.frame_period_s, lms.t0_s, t_cpa, params).values);
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(problems))
    }
}

fn frame_index(examples: &[DetectorExample<'_>], stride: usize) -> Vec<(u32, u32)> {
    examples
        .iter()
        .enumerate()
        .flat_map(|(c, ex)| (0..ex.lms.n_frames()).step_by(stride).map(move |f| (c as u32, f as u32)))
        .collect()
}

fn layer_sizes(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

/// Trains both stages and calibrates the presence threshold on the training
/// and validation clips. No-vehicle clips get the constant target `T_D`.
pub fn train_detector(
    train: &[DetectorExample<'_>],
    val: &[DetectorExample<'_>],
    cfg: &DetectorConfig,
) -> Result<(DetectionModel, DetectorTrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Input("detector needs non-empty training and validation clips".into()));
    }
    let n_bands = train[0].lms.n_bands();
    if let Some(bad) = train.iter().chain(val).find(|ex| ex.lms.n_bands() != n_bands) {
        return Err(Error::Shape(format!("clip has {} bands, expected {n_bands}", bad.lms.n_bands())));
    }
    let train_targets = clip_targets(train, &cfg.cvmd)?;
    let val_targets = clip_targets(val, &cfg.cvmd)?;
    let spec = cfg.context;
    let dim = spec.dim(n_bands);

    let train_index = frame_index(train, cfg.stage1_frame_stride);
    let val_index = frame_index(val, cfg.stage1_frame_stride);

    let scaler = {
        let mut fit = StandardizerFit::new(dim);
        let mut buf = vec![0.0; dim];
        for &(c, f) in &train_index {
            write_context(&train[c as usize].lms.values, f as usize, &spec, &mut buf);
            fit.push(&buf)?;
        }
        fit.finish()?
    };

    let stage1_train = ContextSamples {
        clips: train.iter().map(|ex| &ex.lms.values).collect(),
        targets: train_targets.clone(),
        index: train_index,
        spec,
        n_bands,
        scaler: &scaler,
    };
    let stage1_val = ContextSamples {
        clips: val.iter().map(|ex| &ex.lms.values).collect(),
        targets: val_targets.clone(),
        index: val_index,
        spec,
        n_bands,
        scaler: &scaler,
    };
    let init1 = Fcnn::new(&layer_sizes(dim, &cfg.stage1_hidden), cfg.stage1_l2, cfg.seed)?;
    let mut train1 = cfg.stage1_train;
    train1.seed ^= cfg.seed;
    let (stage1, report1) = neural::train(&init1, &stage1_train, &stage1_val, &train1)?;

    let mut model = DetectionModel {
        format: FORMAT.into(),
        version: VERSION,
        cvmd: cfg.cvmd,
        context: spec,
        n_bands,
        scaler,
        stage1,
        stage2_window: cfg.stage2_window,
        stage2: None,
        presence: PresenceThreshold { threshold: cfg.cvmd.t_d, gap: 0.0 },
    };

    let mut report2 = None;
    if cfg.two_stage {
        let raw_curves = |examples: &[DetectorExample<'_>]| -> Result<Vec<Vec<f64>>> {
            examples.iter().map(|ex| model.stage1_raw(ex.lms)).collect()
        };
        let train_curves = raw_curves(train)?;
        let val_curves = raw_curves(val)?;
        let all_frames = |examples: &[DetectorExample<'_>]| frame_index(examples, 1);
        let stage2_train = WindowSamples {
            curves: &train_curves,
            targets: &train_targets,
            index: all_frames(train),
            window: cfg.stage2_window,
        };
        let stage2_val = WindowSamples {
            curves: &val_curves,
            targets: &val_targets,
            index: all_frames(val),
            window: cfg.stage2_window,
        };
        let init2 =
            Fcnn::new(&layer_sizes(cfg.stage2_window, &cfg.stage2_hidden), cfg.stage2_l2, cfg.seed.wrapping_add(1))?;
        let mut train2 = cfg.stage2_train;
        train2.seed ^= cfg.seed.wrapping_add(1);
        let (stage2, r2) = neural::train(&init2, &stage2_train, &stage2_val, &train2)?;
        model.stage2 = Some(stage2);
        report2 = Some(r2);
    }

    let mut vehicle_minima = Vec::new();
    let mut noise_minima = Vec::new();
    for ex in train.iter().chain(val) {
        let (_, min) = estimate_cpa(&model.predict_cvmd(ex.lms)?)?;
        if ex.annotation.has_vehicle {
            vehicle_minima.push(min);
        } else {
            noise_minima.push(min);
        }
    }
    if noise_minima.is_empty() {
        // a vehicle infinitely far away
        noise_minima.push(cfg.cvmd.t_d);
    }
    if vehicle_minima.is_empty() {
        vehicle_minima.push(0.0);
    }
    model.presence = calibrate_presence_threshold(&vehicle_minima, &noise_minima)?;

    Ok((model, DetectorTrainReport { stage1: report1, stage2: report2 }))
}

impl DetectionModel {
    pub fn is_two_stage(&self) -> bool {
        self.stage2.is_some()
    }

    /// Unclamped stage-1 output for every frame.
    pub fn stage1_raw(&self, lms: &FeatureMatrix) -> Result<Vec<f64>> {
        lms.expect_kind(FeatureKind::Lms)?;
        if lms.n_bands() != self.n_bands {
            return Err(Error::Shape(format!("model expects {} mel bands, got {}", self.n_bands, lms.n_bands())));
        }
        let samples = ContextSamples {
            clips: vec![&lms.values],
            targets: vec![],
            index: (0..lms.n_frames() as u32).map(|f| (0, f)).collect(),
            spec: self.context,
            n_bands: self.n_bands,
            scaler: &self.scaler,
        };
        Ok(neural::predict_all(&self.stage1, &samples)?.into_raw_vec_and_offset().0)
    }

    fn clamp(&self, values: Vec<f64>, lms: &FeatureMatrix) -> CvmdCurve {
        CvmdCurve {
            values: values.into_iter().map(|v| v.clamp(0.0, self.cvmd.t_d)).collect(),
            frame_period_s: lms.frame_period_s,
            t0_s: lms.t0_s,
        }
    }

    /// Stage-1 curve alone, clamped; the one-stage ablation output.
    pub fn predict_stage1(&self, lms: &FeatureMatrix) -> Result<CvmdCurve> {
        Ok(self.clamp(self.stage1_raw(lms)?, lms))
    }

    /// Full pipeline. A one-stage model returns the stage-1 curve.
    pub fn predict_cvmd(&self, lms: &FeatureMatrix) -> Result<CvmdCurve> {
        let stage2 = match &self.stage2 {
            Some(net) => net,
            None => return self.predict_stage1(lms),
        };
        if lms.n_frames() < self.stage2_window {
            return Err(Error::Input(format!(
                "clip has {} frames, refinement needs at least {}",
                lms.n_frames(),
                self.stage2_window
            )));
        }
        let raw = self.stage1_raw(lms)?;
        let targets = [vec![0.0; raw.len()]];
        let curves = [raw];
        let samples = WindowSamples {
            curves: &curves,
            targets: &targets,
            index: (0..curves[0].len() as u32).map(|f| (0, f)).collect(),
            window: self.stage2_window,
        };
        let refined = neural::predict_all(stage2, &samples)?.into_raw_vec_and_offset().0;
        Ok(self.clamp(refined, lms))
    }

    pub fn detect(&self, lms: &FeatureMatrix) -> Result<DetectionResult> {
        let (t_cpa_hat, min_cvmd) = estimate_cpa(&self.predict_cvmd(lms)?)?;
        Ok(DetectionResult { t_cpa_hat, min_cvmd, vehicle_present: vehicle_present(min_cvmd, self.presence.threshold) })
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

#[cfg(test)]
mod tests {
    use super::*;

    fn lms(values: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix { kind: FeatureKind::Lms, values, frame_period_s: 0.025, t0_s: 0.0 }
    }

    #[test]
    fn cvmd_examples() {
        let p = CvmdParams::default();
        assert_eq!(cvmd_target(5.0, 5.0, &p), 0.0);
        assert!((cvmd_target(5.3, 5.0, &p) - 0.3).abs() < 1e-12);
        assert_eq!(cvmd_target(7.0, 5.0, &p), 0.75);
        assert_eq!(cvmd_target(5.75, 5.0, &p), 0.75);
        let noise = target_curve(10, 0.025, 0.0, None, &p);
        assert!(noise.values.iter().all(|&v| v == 0.75));
    }

    #[test]
    fn context_examples() {
        let m = lms(Array2::from_shape_fn((50, 40), |(f, b)| (f * 100 + b) as f64));
        assert_eq!(assemble_context(&m, 20, &ContextSpec::default()).unwrap().len(), 1000);
        let q0 = assemble_context(&m, 7, &ContextSpec { q: 0, stride: 3 }).unwrap();
        assert_eq!(q0, m.values.row(7).to_vec());

        let edge = assemble_context(&m, 0, &ContextSpec { q: 1, stride: 3 }).unwrap();
        let mut want = m.values.row(0).to_vec();
        want.extend(m.values.row(0).iter());
        want.extend(m.values.row(3).iter());
        assert_eq!(edge, want);

        let ms = FeatureMatrix { kind: FeatureKind::Ms, ..m };
        assert!(assemble_context(&ms, 0, &ContextSpec::default()).is_err());
    }

    #[test]
    fn argmin_tie_breaks_early() {
        let mut c = CvmdCurve { values: vec![0.75; 40], frame_period_s: 0.025, t0_s: 0.0 };
        assert_eq!(estimate_cpa(&c).unwrap(), (0.0, 0.75));
        c.values[10] = 0.1;
        c.values[20] = 0.1;
        let (t, m) = estimate_cpa(&c).unwrap();
        assert!((t - 0.25).abs() < 1e-12);
        assert_eq!(m, 0.1);
        assert!(estimate_cpa(&CvmdCurve { values: vec![], ..c }).is_err());
    }

    #[test]
    fn target_curve_cpa_within_half_frame() {
        let period = 1105.0 / 44100.0;
        let c = target_curve(400, period, 0.0, Some(5.0), &CvmdParams::default());
        let (t, _) = estimate_cpa(&c).unwrap();
        assert!((t - 5.0).abs() <= period / 2.0 + 1e-12);
    }

    #[test]
    fn threshold_midpoint_and_overlap() {
        let p = calibrate_presence_threshold(&[0.1, 0.2], &[0.6, 0.7]).unwrap();
        assert!((p.threshold - 0.4).abs() < 1e-12);
        assert!((p.gap - 0.4).abs() < 1e-12);
        assert!(vehicle_present(0.39, p.threshold));
        assert!(!vehicle_present(0.4, p.threshold));
        assert!(calibrate_presence_threshold(&[], &[0.5]).is_err());
    }

    #[test]
    fn missing_cpa_is_validation_error() {
        let m = lms(Array2::zeros((40, 4)));
        let mut bad = ClipAnnotation::vehicle("x", 50.0, 1.0);
        bad.t_cpa_s = None;
        let ex = [DetectorExample { lms: &m, annotation: &bad }];
        let cfg = DetectorConfig { context: ContextSpec { q: 1, stride: 1 }, ..Default::default() };
        assert!(matches!(train_detector(&ex, &ex, &cfg), Err(Error::Validation(_))));
    }
}
