//! Leave-one-vehicle-out cross-validation of the whole pipeline, with the
//! report tables and histograms derived from it.
//!
//! Seeds: every random choice draws from `derive_seed(master_seed, path)` with
//! `path` one of
//! `[iteration, NOISE_SPLIT]`, `[iteration, fold, TRAIN_SPLIT]`,
//! `[iteration, fold, DETECTOR]`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio_io::{read_wav, Manifest, ManifestEntry};
use crate::detection::{
    estimate_cpa, train_detector, vehicle_present, DetectionModel, DetectorConfig, DetectorExample,
};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureExtractor, FeatureKind, MelFeatures};
use crate::neural::TrainConfig;
use crate::parallel::par_map;
use crate::speed::{class_accuracy, rmse, speed_class, train_speed_model, SpeedExample, SpeedFeatureSpec, SpeedModel};
use crate::stats::{derive_seed, mean_std};
use crate::svr::SvrConfig;

const CONFIG_FORMAT: &str = "passby-experiment";
const REPORT_FORMAT: &str = "passby-report";
const VERSION: u32 = 1;

pub const NOISE_SPLIT: u64 = u64::MAX;
pub const TRAIN_SPLIT: u64 = 0;
pub const DETECTOR: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub format: String,
    pub version: u32,
    pub features: FeatureConfig,
    pub detector: DetectorConfig,
    pub svr: SvrConfig,
    pub speed_features: Vec<SpeedFeatureSpec>,
    pub iterations: usize,
    /// Share of the non-test clips used for fitting; the rest is validation.
    pub train_fraction: f64,
    /// Share of the no-vehicle clips held out for testing.
    pub noise_test_fraction: f64,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format: CONFIG_FORMAT.into(),
            version: VERSION,
            features: FeatureConfig::default(),
            detector: DetectorConfig::default(),
            svr: SvrConfig::default(),
            speed_features: FeatureKind::ALL.iter().map(|&k| SpeedFeatureSpec::for_kind(k)).collect(),
            iterations: 10,
            train_fraction: 0.8,
            noise_test_fraction: 0.5,
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// The full protocol: 100-epoch networks on every frame, ten iterations.
    pub fn full() -> Self {
        Self::default()
    }

    /// Same architecture on a desk-scale budget: one iteration, stage 1 on
    /// every 8th frame for 8 epochs, stage 2 for 10 epochs.
    pub fn benchmark() -> Self {
        let full = Self::default();
        Self {
            iterations: 1,
            detector: DetectorConfig {
                stage1_frame_stride: 8,
                stage1_train: TrainConfig { epochs: 8, ..TrainConfig::default() },
                stage2_train: TrainConfig { epochs: 10, ..TrainConfig::default() },
                ..full.detector
            },
            ..full
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CONFIG_FORMAT || self.version != VERSION {
            return Err(Error::Schema(format!(
                "expected {CONFIG_FORMAT} v{VERSION}, found {} v{}",
                self.format, self.version
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction must be in (0, 1), got {}", self.train_fraction)));
        }
        if !(0.0..=1.0).contains(&self.noise_test_fraction) {
            return Err(Error::Config(format!(
                "noise_test_fraction must be in [0, 1], got {}",
                self.noise_test_fraction
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        let mut kinds: Vec<_> = self.speed_features.iter().map(|s| s.representation.name()).collect();
        kinds.sort_unstable();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("at most one speed feature spec per representation".into()));
        }
        self.detector.validate()?;
        self.svr.validate()?;
        for s in &self.speed_features {
            s.validate(self.features.mel.n_mel)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One manifest entry with its features.
#[derive(Debug, Clone)]
pub struct ClipData {
    pub entry: ManifestEntry,
    pub features: MelFeatures,
}

/// Reads every clip of the manifest and computes its features.
pub fn load_features(manifest: &Manifest, cfg: &FeatureConfig) -> Result<Vec<ClipData>> {
    par_map(&manifest.entries, |entry| {
        let path = manifest.resolve(entry);
        let clip = read_wav(&path)?;
        entry
            .annotation
            .check(Some(clip.duration_s()))
            .map_err(|reason| Error::Format { path: path.clone(), reason })?;
        let features = FeatureExtractor::new(*cfg, clip.sample_rate())?.compute(&clip)?;
        Ok(ClipData { entry: entry.clone(), features })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRecord {
    pub representation: FeatureKind,
    pub speed_kmh: f64,
    pub class_index: usize,
}

/// Everything measured on one test clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub path: PathBuf,
    pub has_vehicle: bool,
    pub speed_kmh: Option<f64>,
    pub t_cpa_s: Option<f64>,
    pub t_cpa_hat: f64,
    pub min_cvmd: f64,
    pub vehicle_present: bool,
    /// Stage 1 alone.
    pub one_stage_t_cpa_hat: f64,
    pub one_stage_min_cvmd: f64,
    /// Estimated at `t_cpa_hat` even when the clip was not flagged present.
    pub speeds: Vec<SpeedRecord>,
}

impl ClipRecord {
    pub fn offset(&self) -> Option<f64> {
        self.t_cpa_s.map(|t| self.t_cpa_hat - t)
    }

    pub fn one_stage_offset(&self) -> Option<f64> {
        self.t_cpa_s.map(|t| self.one_stage_t_cpa_hat - t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub iteration: usize,
    pub fold: usize,
    pub test_vehicle: String,
    pub detector_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    /// SHA-256 over the sorted paths of the fitting and validation clips.
    pub train_fingerprint: String,
    pub val_fingerprint: String,
    pub presence_threshold: f64,
    pub training_gap: f64,
    /// `min(noise test minima) - max(vehicle test minima)`.
    pub test_gap: Option<f64>,
    pub clips: Vec<ClipRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedTableRow {
    pub vehicle_id: String,
    pub n_clips: usize,
    /// One entry per representation, in `ExperimentReport::representations` order.
    pub rmse: Vec<f64>,
    pub accuracy_exact: Vec<f64>,
    pub accuracy_adjacent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub frame_period_s: f64,
    pub offset_mean: f64,
    pub offset_std: f64,
    pub one_stage_offset_mean: f64,
    pub one_stage_offset_std: f64,
    /// Share of vehicle test clips flagged present.
    pub detection_rate: f64,
    /// Share of noise test clips flagged present.
    pub false_alarm_rate: Option<f64>,
    pub folds_with_positive_gap: usize,
    pub n_folds: usize,
    /// Separation of all vehicle and noise test minima.
    pub max_vehicle_min: f64,
    pub min_noise_min: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub manifest_fingerprint: String,
    pub representations: Vec<FeatureKind>,
    /// Vehicle rows in manifest order, then the unweighted average row.
    pub speed_table: Vec<SpeedTableRow>,
    pub detection: DetectionSummary,
    pub folds: Vec<FoldRecord>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT || r.version != VERSION {
            return Err(Error::Schema(format!(
                "expected {REPORT_FORMAT} v{VERSION}, found {} v{}",
                r.format, r.version
            )));
        }
        Ok(r)
    }

    pub fn average(&self) -> &SpeedTableRow {
        self.speed_table.last().expect("report has an average row")
    }

    pub fn column(&self, kind: FeatureKind) -> Option<usize> {
        self.representations.iter().position(|&k| k == kind)
    }

    pub fn vehicle_records(&self) -> impl Iterator<Item = &ClipRecord> {
        self.folds.iter().flat_map(|f| &f.clips).filter(|c| c.has_vehicle)
    }

    pub fn noise_records(&self) -> impl Iterator<Item = &ClipRecord> {
        self.folds.iter().flat_map(|f| &f.clips).filter(|c| !c.has_vehicle)
    }
}

fn fingerprint<'a>(paths: impl Iterator<Item = &'a Path>) -> String {
    let mut names: Vec<String> = paths.map(|p| p.to_string_lossy().into_owned()).collect();
    names.sort_unstable();
    let mut h = Sha256::new();
    for n in &names {
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    format!("{:x}", h.finalize())
}

fn manifest_fingerprint(data: &[ClipData]) -> String {
    let mut h = Sha256::new();
    for d in data {
        let a = &d.entry.annotation;
        h.update(format!(
            "{}\t{}\t{:?}\t{:?}\t{}\n",
            d.entry.path.display(),
            a.vehicle_id,
            a.speed_kmh,
            a.t_cpa_s,
            a.has_vehicle
        ));
    }
    format!("{:x}", h.finalize())
}

pub fn cross_validate(manifest: &Manifest, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = load_features(manifest, &cfg.features)?;
    cross_validate_features(&data, cfg)
}

struct FoldPlan {
    iteration: usize,
    fold: usize,
    vehicle: String,
    noise_train: Vec<usize>,
    noise_test: Vec<usize>,
}

/// Cross-validation over clips whose features are already computed.
pub fn cross_validate_features(data: &[ClipData], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut vehicles: Vec<String> = Vec::new();
    for d in data.iter().filter(|d| d.entry.annotation.has_vehicle) {
        if !vehicles.contains(&d.entry.annotation.vehicle_id) {
            vehicles.push(d.entry.annotation.vehicle_id.clone());
        }
    }
    if vehicles.len() < 2 {
        return Err(Error::Config(format!("cross-validation needs at least 2 vehicles, found {}", vehicles.len())));
    }
    let noise: Vec<usize> = (0..data.len()).filter(|&i| !data[i].entry.annotation.has_vehicle).collect();

    let mut plans = Vec::new();
    for iteration in 0..cfg.iterations {
        let mut shuffled = noise.clone();
        shuffled
            .shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[iteration as u64, NOISE_SPLIT])));
        let n_test = (noise.len() as f64 * cfg.noise_test_fraction).floor() as usize;
        let (mut test, mut train) = (shuffled[..n_test].to_vec(), shuffled[n_test..].to_vec());
        test.sort_unstable();
        train.sort_unstable();
        for (fold, vehicle) in vehicles.iter().enumerate() {
            plans.push(FoldPlan {
                iteration,
                fold,
                vehicle: vehicle.clone(),
                noise_train: train.clone(),
                noise_test: test.clone(),
            });
        }
    }

    let folds = par_map(&plans, |plan| run_fold(data, cfg, plan)).into_iter().collect::<Result<Vec<_>>>()?;

    let representations: Vec<FeatureKind> = cfg.speed_features.iter().map(|s| s.representation).collect();
    let frame_period_s = data[0].features.lms.frame_period_s;
    Ok(ExperimentReport {
        format: REPORT_FORMAT.into(),
        version: VERSION,
        config: cfg.clone(),
        manifest_fingerprint: manifest_fingerprint(data),
        speed_table: speed_table(&folds, &vehicles, &representations)?,
        detection: detection_summary(&folds, frame_period_s),
        representations,
        folds,
    })
}

fn run_fold(data: &[ClipData], cfg: &ExperimentConfig, plan: &FoldPlan) -> Result<FoldRecord> {
    let is_test = |d: &ClipData| d.entry.annotation.has_vehicle && d.entry.annotation.vehicle_id == plan.vehicle;
    let test: Vec<usize> =
        (0..data.len()).filter(|&i| is_test(&data[i])).chain(plan.noise_test.iter().copied()).collect();
    if !test.iter().any(|&i| data[i].entry.annotation.has_vehicle) {
        return Err(Error::Config(format!("fold for vehicle {} has no test clips", plan.vehicle)));
    }

    let mut pool: Vec<usize> = (0..data.len())
        .filter(|&i| data[i].entry.annotation.has_vehicle && !is_test(&data[i]))
        .chain(plan.noise_train.iter().copied())
        .collect();
    if pool.len() < 2 {
        return Err(Error::Config(format!("fold for vehicle {} has fewer than 2 training clips", plan.vehicle)));
    }
    let path = [plan.iteration as u64, plan.fold as u64];
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[path[0], path[1], TRAIN_SPLIT])));
    let n_train = ((pool.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, pool.len() - 1);
    let mut train = pool[..n_train].to_vec();
    let mut val = pool[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();

    let examples = |idx: &[usize]| -> Vec<DetectorExample<'_>> {
        idx.iter()
            .map(|&i| DetectorExample { lms: &data[i].features.lms, annotation: &data[i].entry.annotation })
            .collect()
    };
    let detector_seed = derive_seed(cfg.master_seed, &[path[0], path[1], DETECTOR]);
    let det_cfg = DetectorConfig { seed: detector_seed, two_stage: true, ..cfg.detector.clone() };
    let (detector, _) = train_detector(&examples(&train), &examples(&val), &det_cfg)?;

    let speed_models = cfg
        .speed_features
        .iter()
        .map(|spec| {
            let ex: Vec<SpeedExample<'_>> = train
                .iter()
                .filter(|&&i| data[i].entry.annotation.has_vehicle)
                .map(|&i| SpeedExample {
                    features: data[i].features.get(spec.representation),
                    annotation: &data[i].entry.annotation,
                })
                .collect();
            train_speed_model(&ex, spec, &cfg.svr)
        })
        .collect::<Result<Vec<_>>>()?;

    let clips = test.iter().map(|&i| evaluate_clip(&data[i], &detector, &speed_models)).collect::<Result<Vec<_>>>()?;

    let max_vehicle = clips.iter().filter(|c| c.has_vehicle).map(|c| c.min_cvmd).fold(f64::MIN, f64::max);
    let min_noise = clips.iter().filter(|c| !c.has_vehicle).map(|c| c.min_cvmd).fold(f64::INFINITY, f64::min);
    let paths = |idx: &[usize]| fingerprint(idx.iter().map(|&i| data[i].entry.path.as_path()));

    Ok(FoldRecord {
        iteration: plan.iteration,
        fold: plan.fold,
        test_vehicle: plan.vehicle.clone(),
        detector_seed,
        n_train: train.len(),
        n_val: val.len(),
        train_fingerprint: paths(&train),
        val_fingerprint: paths(&val),
        presence_threshold: detector.presence.threshold,
        training_gap: detector.presence.gap,
        test_gap: min_noise.is_finite().then_some(min_noise - max_vehicle),
        clips,
    })
}

fn evaluate_clip(clip: &ClipData, detector: &DetectionModel, speed_models: &[SpeedModel]) -> Result<ClipRecord> {
    let lms = &clip.features.lms;
    let (t_cpa_hat, min_cvmd) = estimate_cpa(&detector.predict_cvmd(lms)?)?;
    let (one_stage_t_cpa_hat, one_stage_min_cvmd) = estimate_cpa(&detector.predict_stage1(lms)?)?;
    let a = &clip.entry.annotation;
    let speeds = if a.has_vehicle {
        speed_models
            .iter()
            .map(|m| {
                let fm = clip.features.get(m.spec.representation);
                let est = m.predict_at(fm, fm.frame_at(t_cpa_hat))?;
                Ok(SpeedRecord {
                    representation: m.spec.representation,
                    speed_kmh: est.speed_kmh,
                    class_index: est.class_index,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(ClipRecord {
        path: clip.entry.path.clone(),
        has_vehicle: a.has_vehicle,
        speed_kmh: a.speed_kmh,
        t_cpa_s: a.t_cpa_s,
        t_cpa_hat,
        min_cvmd,
        vehicle_present: vehicle_present(min_cvmd, detector.presence.threshold),
        one_stage_t_cpa_hat,
        one_stage_min_cvmd,
        speeds,
    })
}

/// Per-vehicle speed metrics pooled over iterations, plus the unweighted
/// average row.
pub fn speed_table(
    folds: &[FoldRecord],
    vehicles: &[String],
    representations: &[FeatureKind],
) -> Result<Vec<SpeedTableRow>> {
    let mut by_vehicle: BTreeMap<&str, Vec<&ClipRecord>> = BTreeMap::new();
    for f in folds {
        by_vehicle.entry(f.test_vehicle.as_str()).or_default().extend(f.clips.iter().filter(|c| c.has_vehicle));
    }
    let mut rows = Vec::with_capacity(vehicles.len() + 1);
    for v in vehicles {
        let clips = by_vehicle.get(v.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let truth: Vec<f64> = clips.iter().map(|c| c.speed_kmh.unwrap_or(f64::NAN)).collect();
        let truth_class: Vec<usize> = truth.iter().map(|&s| speed_class(s)).collect();
        let mut row = SpeedTableRow {
            vehicle_id: v.clone(),
            n_clips: clips.len(),
            rmse: Vec::new(),
            accuracy_exact: Vec::new(),
            accuracy_adjacent: Vec::new(),
        };
        for &kind in representations {
            let est: Vec<&SpeedRecord> = clips
                .iter()
                .map(|c| {
                    c.speeds
                        .iter()
                        .find(|s| s.representation == kind)
                        .ok_or_else(|| Error::Input(format!("clip {} lacks a {kind} estimate", c.path.display())))
                })
                .collect::<Result<_>>()?;
            let speeds: Vec<f64> = est.iter().map(|s| s.speed_kmh).collect();
            let classes: Vec<usize> = est.iter().map(|s| s.class_index).collect();
            row.rmse.push(rmse(&speeds, &truth)?);
            row.accuracy_exact.push(class_accuracy(&classes, &truth_class, 0)?);
            row.accuracy_adjacent.push(class_accuracy(&classes, &truth_class, 1)?);
        }
        rows.push(row);
    }
    let mean = |pick: &dyn Fn(&SpeedTableRow) -> &Vec<f64>, k: usize| {
        rows.iter().map(|r| pick(r)[k]).sum::<f64>() / rows.len() as f64
    };
    let k = representations.len();
    let average = SpeedTableRow {
        vehicle_id: "Average".into(),
        n_clips: rows.iter().map(|r| r.n_clips).sum(),
        rmse: (0..k).map(|i| mean(&|r| &r.rmse, i)).collect(),
        accuracy_exact: (0..k).map(|i| mean(&|r| &r.accuracy_exact, i)).collect(),
        accuracy_adjacent: (0..k).map(|i| mean(&|r| &r.accuracy_adjacent, i)).collect(),
    };
    rows.push(average);
    Ok(rows)
}

fn detection_summary(folds: &[FoldRecord], frame_period_s: f64) -> DetectionSummary {
    let vehicle: Vec<&ClipRecord> = folds.iter().flat_map(|f| &f.clips).filter(|c| c.has_vehicle).collect();
    let noise: Vec<&ClipRecord> = folds.iter().flat_map(|f| &f.clips).filter(|c| !c.has_vehicle).collect();
    let offsets: Vec<f64> = vehicle.iter().filter_map(|c| c.offset()).collect();
    let one_stage: Vec<f64> = vehicle.iter().filter_map(|c| c.one_stage_offset()).collect();
    let (offset_mean, offset_std) = mean_std(&offsets);
    let (one_stage_offset_mean, one_stage_offset_std) = mean_std(&one_stage);
    let rate = |c: &[&ClipRecord]| c.iter().filter(|c| c.vehicle_present).count() as f64 / c.len() as f64;
    let max_vehicle_min = vehicle.iter().map(|c| c.min_cvmd).fold(f64::MIN, f64::max);
    let min_noise_min = noise.iter().map(|c| c.min_cvmd).reduce(f64::min);
    DetectionSummary {
        frame_period_s,
        offset_mean,
        offset_std,
        one_stage_offset_mean,
        one_stage_offset_std,
        detection_rate: rate(&vehicle),
        false_alarm_rate: (!noise.is_empty()).then(|| rate(&noise)),
        folds_with_positive_gap: folds.iter().filter(|f| f.test_gap.is_some_and(|g| g > 0.0)).count(),
        n_folds: folds.len(),
        max_vehicle_min,
        min_noise_min,
        gap: min_noise_min.map(|m| m - max_vehicle_min),
    }
}

/// Counts of `values` in bins of `width` whose centres are integer multiples
/// of `width`. Returns `(low edge, high edge, count)` for every bin between
/// the smallest and largest value.
pub fn centered_histogram(values: &[f64], width: f64) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || width.is_nan() || width <= 0.0 {
        return Vec::new();
    }
    let bin = |v: f64| (v / width).round() as i64;
    let lo = values.iter().map(|&v| bin(v)).min().unwrap_or(0);
    let hi = values.iter().map(|&v| bin(v)).max().unwrap_or(0);
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for &v in values {
        counts[(bin(v) - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let centre = (lo + i as i64) as f64 * width;
            (centre - width / 2.0, centre + width / 2.0, n)
        })
        .collect()
}

/// Counts in `n_bins` equal bins over `[0, upper]`; values outside land in the
/// end bins.
pub fn range_histogram(values: &[f64], upper: f64, n_bins: usize) -> Vec<usize> {
    let mut counts = vec![0; n_bins];
    for &v in values {
        let b = ((v / upper) * n_bins as f64).floor().clamp(0.0, (n_bins - 1) as f64) as usize;
        counts[b] += 1;
    }
    counts
}

const MINIMA_BINS: usize = 30;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `offsets_histogram.csv`, `cvmd_minima_histogram.csv` and
/// `separation.csv`; returns their paths.
pub fn export_histograms(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = &report.detection;

    let offsets_path = dir.join("offsets_histogram.csv");
    let offsets: Vec<f64> = report.vehicle_records().filter_map(ClipRecord::offset).collect();
    let one_stage: Vec<f64> = report.vehicle_records().filter_map(ClipRecord::one_stage_offset).collect();
    let mut w = create(&offsets_path)?;
    writeln!(w, "stage,bin_low_s,bin_high_s,count").map_err(|e| Error::io(&offsets_path, e))?;
    for (stage, values) in [("two_stage", &offsets), ("one_stage", &one_stage)] {
        for (lo, hi, n) in centered_histogram(values, d.frame_period_s) {
            writeln!(w, "{stage},{lo},{hi},{n}").map_err(|e| Error::io(&offsets_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&offsets_path, e))?;

    let minima_path = dir.join("cvmd_minima_histogram.csv");
    let t_d = report.config.detector.cvmd.t_d;
    let vehicle: Vec<f64> = report.vehicle_records().map(|c| c.min_cvmd).collect();
    let noise: Vec<f64> = report.noise_records().map(|c| c.min_cvmd).collect();
    let (hv, hn) = (range_histogram(&vehicle, t_d, MINIMA_BINS), range_histogram(&noise, t_d, MINIMA_BINS));
    let mut w = create(&minima_path)?;
    writeln!(w, "bin_low_s,bin_high_s,vehicle_count,noise_count").map_err(|e| Error::io(&minima_path, e))?;
    let width = t_d / MINIMA_BINS as f64;
    for i in 0..MINIMA_BINS {
        writeln!(w, "{},{},{},{}", i as f64 * width, (i + 1) as f64 * width, hv[i], hn[i])
            .map_err(|e| Error::io(&minima_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&minima_path, e))?;

    let sep_path = dir.join("separation.csv");
    let mut w = create(&sep_path)?;
    writeln!(w, "max_vehicle_min_s,min_noise_min_s,gap_s,threshold_s").map_err(|e| Error::io(&sep_path, e))?;
    let threshold = d.min_noise_min.filter(|_| d.gap.is_some_and(|g| g > 0.0)).map(|m| (m + d.max_vehicle_min) / 2.0);
    writeln!(w, "{},{},{},{}", d.max_vehicle_min, fmt_opt(d.min_noise_min), fmt_opt(d.gap), fmt_opt(threshold))
        .map_err(|e| Error::io(&sep_path, e))?;
    w.flush().map_err(|e| Error::io(&sep_path, e))?;

    Ok(vec![offsets_path, minima_path, sep_path])
}

/// Writes `speed_rmse.csv` and `speed_class_accuracy.csv`; returns their paths.
pub fn export_tables(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names: Vec<&str> = report.representations.iter().map(|k| k.name()).collect();

    let rmse_path = dir.join("speed_rmse.csv");
    let mut w = csv::Writer::from_path(&rmse_path)?;
    let mut header = vec!["vehicle".to_string(), "n_clips".to_string()];
    header.extend(names.iter().map(|n| format!("rmse_{n}_kmh")));
    w.write_record(&header)?;
    for row in &report.speed_table {
        let mut rec = vec![row.vehicle_id.clone(), row.n_clips.to_string()];
        rec.extend(row.rmse.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&rmse_path, e))?;

    let acc_path = dir.join("speed_class_accuracy.csv");
    let mut w = csv::Writer::from_path(&acc_path)?;
    let mut header = vec!["vehicle".to_string(), "n_clips".to_string()];
    for n in &names {
        header.push(format!("{n}_delta0"));
        header.push(format!("{n}_delta1"));
    }
    w.write_record(&header)?;
    for row in &report.speed_table {
        let mut rec = vec![row.vehicle_id.clone(), row.n_clips.to_string()];
        for k in 0..names.len() {
            rec.push(row.accuracy_exact[k].to_string());
            rec.push(row.accuracy_adjacent[k].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&acc_path, e))?;
    Ok(vec![rmse_path, acc_path])
}

/// Writes `report.json`, the speed tables and the histograms.
pub fn write_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    std::fs::write(&json, report.to_json()?).map_err(|e| Error::io(&json, e))?;
    let mut out = vec![json];
    out.extend(export_tables(report, dir)?);
    out.extend(export_histograms(report, dir)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_bins() {
        assert_eq!(centered_histogram(&[0.0, 0.0, 0.0], 0.025), vec![(-0.0125, 0.0125, 3)]);
        let h = centered_histogram(&[-0.05, 0.01, 0.02, 0.1], 0.025);
        assert_eq!(h.len(), 7);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 4);
        assert_eq!(h[0].2, 1);
        assert_eq!(h[2].2, 1);
        assert_eq!(h[3].2, 1);
        assert_eq!(h[6].2, 1);
    }

    #[test]
    fn range_bins_conserve_counts() {
        let v = [0.0, 0.1, 0.75, 0.9, -0.1, 0.3];
        let h = range_histogram(&v, 0.75, 30);
        assert_eq!(h.iter().sum::<usize>(), v.len());
        assert_eq!(h[0], 2);
        assert_eq!(h[29], 2);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::full().validate().is_ok());
        assert!(ExperimentConfig::benchmark().validate().is_ok());
        let bad = ExperimentConfig { train_fraction: 1.0, ..ExperimentConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = ExperimentConfig { iterations: 0, ..ExperimentConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let json = ExperimentConfig::benchmark().to_json().unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), ExperimentConfig::benchmark());
        let old = json.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(ExperimentConfig::from_json(&old), Err(Error::Schema(_))));
    }
}
