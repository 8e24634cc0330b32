//! WAV clip I/O and dataset manifests.
//!
//! Clips are mono `f32` sample buffers. Reading accepts integer PCM (16, 24 or
//! 32 bit) and 32-bit float PCM, downmixing multichannel audio by the
//! arithmetic mean of the channels. Writing always produces 32-bit float mono,
//! so a write/read round trip is bit-exact.
//!
//! A manifest is a UTF-8 CSV with the header
//! `path,vehicle_id,speed_kmh,t_cpa_s,has_vehicle`. Relative clip paths are
//! resolved against the directory containing the manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Precondition("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Precondition("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Precondition(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

/// Ground truth for one clip. Vehicle clips carry speed and CPA time; noise
/// clips carry neither.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipAnnotation {
    pub vehicle_id: String,
    pub has_vehicle: bool,
    pub speed_kmh: Option<f64>,
    pub t_cpa_s: Option<f64>,
}

impl ClipAnnotation {
    pub fn vehicle(vehicle_id: impl Into<String>, speed_kmh: f64, t_cpa_s: f64) -> Self {
        Self { vehicle_id: vehicle_id.into(), has_vehicle: true, speed_kmh: Some(speed_kmh), t_cpa_s: Some(t_cpa_s) }
    }

    pub fn noise() -> Self {
        Self { vehicle_id: String::new(), has_vehicle: false, speed_kmh: None, t_cpa_s: None }
    }

    /// Checks the annotation invariants. `duration_s`, when known, bounds the
    /// CPA time from above.
    pub fn check(&self, duration_s: Option<f64>) -> std::result::Result<(), String> {
        match (self.has_vehicle, self.speed_kmh, self.t_cpa_s) {
            (true, Some(v), Some(t)) => {
                if !(v.is_finite() && v > 0.0) {
                    return Err(format!("speed_kmh must be positive, got {v}"));
                }
                if !(t.is_finite() && t >= 0.0) {
                    return Err(format!("t_cpa_s must be non-negative, got {t}"));
                }
                if let Some(d) = duration_s {
                    if t > d {
                        return Err(format!("t_cpa_s {t} exceeds clip duration {d}"));
                    }
                }
                Ok(())
            }
            (true, _, _) => Err("has_vehicle is true but speed_kmh or t_cpa_s is empty".into()),
            (false, None, None) => Ok(()),
            (false, _, _) => Err("has_vehicle is false but speed_kmh or t_cpa_s is set".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub path: PathBuf,
    pub annotation: ClipAnnotation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// Distinct vehicle ids in order of first appearance.
    pub fn vehicle_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| e.annotation.has_vehicle)
            .map(|e| e.annotation.vehicle_id.clone())
            .filter(|id| seen.insert(id.clone()))
            .collect()
    }
}

pub const MANIFEST_COLUMNS: [&str; 5] = ["path", "vehicle_id", "speed_kmh", "t_cpa_s", "has_vehicle"];

/// Reads a WAV file into a mono clip.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format { path: path.into(), reason: "zero channels".into() });
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => {
            reader.into_samples::<f32>().collect::<std::result::Result<_, _>>().map_err(|e| wav_error(path, e))?
        }
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        (fmt, bits) => {
            return Err(Error::Unsupported {
                path: path.into(),
                reason: format!("{fmt:?} PCM with {bits} bits per sample"),
            })
        }
    };

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| {
                let sum: f64 = frame.iter().map(|&s| s as f64).sum();
                (sum / channels as f64) as f32
            })
            .collect()
    };
    AudioClip::new(samples, spec.sample_rate).map_err(|e| Error::Format { path: path.into(), reason: e.to_string() })
}

/// Writes a clip as 32-bit float mono PCM. Values outside [-1, 1] are kept.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    if clip.is_empty() {
        return Err(Error::Precondition("cannot write an empty clip".into()));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| write_error(path, e))?;
    for &s in clip.samples() {
        writer.write_sample(s).map_err(|e| write_error(path, e))?;
    }
    writer.finalize().map_err(|e| write_error(path, e))
}

/// Maps a hound error raised while reading an already opened file. I/O
/// failures at that point mean the file is truncated.
fn wav_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(source) => Error::Format { path: path.into(), reason: source.to_string() },
        hound::Error::Unsupported => {
            Error::Unsupported { path: path.into(), reason: "unsupported WAV encoding".into() }
        }
        other => Error::Format { path: path.into(), reason: other.to_string() },
    }
}

fn write_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Format { path: path.into(), reason: other.to_string() },
    }
}

/// Loads and validates a manifest. All invalid rows are reported together.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, base_dir)
}

pub fn parse_manifest(text: &str, base_dir: PathBuf) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut column = [0usize; 5];
    for (slot, name) in column.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("manifest is missing column `{name}`")))?;
    }

    let mut entries = Vec::new();
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record?;
        let field = |k: usize| record.get(column[k]).unwrap_or("");
        match parse_row(field(0), field(1), field(2), field(3), field(4)) {
            Ok(entry) => entries.push(entry),
            Err(msg) => problems.push(format!("line {line}: {msg}")),
        }
        if !field(0).is_empty() && !seen.insert(field(0).to_string()) {
            problems.push(format!("line {line}: duplicate path {}", field(0)));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    Ok(Manifest { entries, base_dir })
}

fn parse_row(
    path: &str,
    vehicle_id: &str,
    speed: &str,
    t_cpa: &str,
    has_vehicle: &str,
) -> std::result::Result<ManifestEntry, String> {
    if path.is_empty() {
        return Err("empty path".into());
    }
    let has_vehicle = match has_vehicle.to_ascii_lowercase().as_str() {
        "true" | "1" => true,
        "false" | "0" => false,
        other => return Err(format!("has_vehicle must be true or false, got `{other}`")),
    };
    let number = |s: &str, name: &str| -> std::result::Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>().map(Some).map_err(|_| format!("{name} is not a number: `{s}`"))
        }
    };
    let annotation = ClipAnnotation {
        vehicle_id: vehicle_id.to_string(),
        has_vehicle,
        speed_kmh: number(speed, "speed_kmh")?,
        t_cpa_s: number(t_cpa, "t_cpa_s")?,
    };
    annotation.check(None)?;
    Ok(ManifestEntry { path: PathBuf::from(path), annotation })
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(MANIFEST_COLUMNS)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &manifest.entries {
        let a = &e.annotation;
        writer.write_record([
            e.path.to_string_lossy().as_ref(),
            a.vehicle_id.as_str(),
            &fmt(a.speed_kmh),
            &fmt(a.t_cpa_s),
            if a.has_vehicle { "true" } else { "false" },
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
