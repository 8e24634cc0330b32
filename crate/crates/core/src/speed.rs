//! Speed estimation from mel features around the CPA frame, plus the RMSE and
//! speed-class evaluation metrics.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio_io::ClipAnnotation;
use crate::detection::DetectionResult;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::svr::{svr_train, SvrConfig, SvrModel};

const FORMAT: &str = "passby-speed";
const VERSION: u32 = 1;

/// Lower edge of speed class 0, km/h.
pub const CLASS_ORIGIN_KMH: f64 = 25.0;
pub const CLASS_WIDTH_KMH: f64 = 10.0;
pub const N_CLASSES: usize = 8;

/// Which block of a feature matrix feeds the regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeedFeatureSpec {
    pub representation: FeatureKind,
    /// Odd number of frames centered on the CPA frame.
    pub time_window: usize,
    /// Inclusive band range, counted from `index_base`.
    pub band_range: [usize; 2],
    /// 0 or 1.
    #[serde(default)]
    pub index_base: usize,
}

impl SpeedFeatureSpec {
    pub fn ms() -> Self {
        Self { representation: FeatureKind::Ms, time_window: 91, band_range: [3, 31], index_base: 0 }
    }

    pub fn lms() -> Self {
        Self { representation: FeatureKind::Lms, time_window: 91, band_range: [2, 20], index_base: 0 }
    }

    pub fn mfcc() -> Self {
        Self { representation: FeatureKind::Mfcc, time_window: 61, band_range: [1, 31], index_base: 0 }
    }

    pub fn for_kind(kind: FeatureKind) -> Self {
        match kind {
            FeatureKind::Ms => Self::ms(),
            FeatureKind::Lms => Self::lms(),
            FeatureKind::Mfcc => Self::mfcc(),
        }
    }

    /// Zero-based inclusive band range.
    pub fn bands(&self) -> Result<(usize, usize)> {
        let [lo, hi] = self.band_range;
        if self.index_base > 1 || lo < self.index_base || lo > hi {
            return Err(Error::Config(format!(
                "invalid band range {:?} with index base {}",
                self.band_range, self.index_base
            )));
        }
        Ok((lo - self.index_base, hi - self.index_base))
    }

    pub fn vector_len(&self) -> Result<usize> {
        let (lo, hi) = self.bands()?;
        Ok(self.time_window * (hi - lo + 1))
    }

    pub fn validate(&self, n_bands: usize) -> Result<()> {
        if self.time_window == 0 || self.time_window.is_multiple_of(2) {
            return Err(Error::Config(format!("time window must be odd and positive, got {}", self.time_window)));
        }
        let (_, hi) = self.bands()?;
        if hi >= n_bands {
            return Err(Error::Config(format!(
                "band range {:?} exceeds the {n_bands} available bands",
                self.band_range
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub speed_kmh: f64,
    pub class_index: usize,
}

pub fn speed_class(speed_kmh: f64) -> usize {
    let k = ((speed_kmh - CLASS_ORIGIN_KMH) / CLASS_WIDTH_KMH).floor();
    k.clamp(0.0, (N_CLASSES - 1) as f64) as usize
}

/// Flattened `time_window × bands` block centered on `cpa_frame`, time-major,
/// edge-replicated past the ends of the clip.
pub fn extract_speed_features(fm: &FeatureMatrix, cpa_frame: usize, spec: &SpeedFeatureSpec) -> Result<Vec<f64>> {
    fm.expect_kind(spec.representation)?;
    spec.validate(fm.n_bands())?;
    let (lo, hi) = spec.bands()?;
    let half = (spec.time_window / 2) as isize;
    let last = fm.n_frames() as isize - 1;
    let mut out = Vec::with_capacity(spec.vector_len()?);
    for j in -half..=half {
        let f = (cpa_frame as isize + j).clamp(0, last) as usize;
        out.extend(fm.values.row(f).iter().skip(lo).take(hi - lo + 1));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedModel {
    pub format: String,
    pub version: u32,
    pub spec: SpeedFeatureSpec,
    pub svr: SvrModel,
}

/// A clip's features of the model's representation with its annotation.
#[derive(Debug, Clone, Copy)]
pub struct SpeedExample<'a> {
    pub features: &'a FeatureMatrix,
    pub annotation: &'a ClipAnnotation,
}

/// Trains on features taken at the annotated CPA of every clip.
pub fn train_speed_model(
    examples: &[SpeedExample<'_>],
    spec: &SpeedFeatureSpec,
    cfg: &SvrConfig,
) -> Result<SpeedModel> {
    let dim = spec.vector_len()?;
    let mut rows = Vec::with_capacity(examples.len() * dim);
    let mut targets = Vec::with_capacity(examples.len());
    let mut problems = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let a = ex.annotation;
        match (a.has_vehicle, a.speed_kmh, a.t_cpa_s) {
            (true, Some(v), Some(t)) => {
                let frame = ex.features.frame_at(t);
                rows.extend(extract_speed_features(ex.features, frame, spec)?);
                targets.push(v);
            }
            _ => problems.push(format!("clip {i}: speed training needs a vehicle clip with speed and t_cpa")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let x = Array2::from_shape_vec((targets.len(), dim), rows).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(SpeedModel { format: FORMAT.into(), version: VERSION, spec: *spec, svr: svr_train(x.view(), &targets, cfg)? })
}

impl SpeedModel {
    pub fn predict_at(&self, fm: &FeatureMatrix, cpa_frame: usize) -> Result<SpeedEstimate> {
        let x = extract_speed_features(fm, cpa_frame, &self.spec)?;
        let speed_kmh = self.svr.predict(&x)?;
        Ok(SpeedEstimate { speed_kmh, class_index: speed_class(speed_kmh) })
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

/// Estimates speed at the detected CPA. The detection must report a vehicle.
pub fn predict_speed(model: &SpeedModel, fm: &FeatureMatrix, detection: &DetectionResult) -> Result<SpeedEstimate> {
    if !detection.vehicle_present {
        return Err(Error::Precondition("no vehicle detected in clip".into()));
    }
    model.predict_at(fm, fm.frame_at(detection.t_cpa_hat))
}

pub fn rmse(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::Shape(format!("{} estimates for {} true values", est.len(), truth.len())));
    }
    if est.is_empty() {
        return Err(Error::Input("RMSE of zero measurements".into()));
    }
    let sq: f64 = est.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok((sq / est.len() as f64).sqrt())
}

/// Fraction of pairs whose classes differ by at most `delta`.
pub fn class_accuracy(est: &[usize], truth: &[usize], delta: usize) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::Shape(format!("{} estimates for {} true classes", est.len(), truth.len())));
    }
    if est.is_empty() {
        return Err(Error::Input("accuracy of zero measurements".into()));
    }
    let hits = est.iter().zip(truth).filter(|(e, t)| e.abs_diff(**t) <= delta).count();
    Ok(hits as f64 / est.len() as f64)
}
