//! Synthetic pass-by clips: a harmonic engine stack plus tire noise moving on a
//! straight line past the microphone, over pink ambient noise.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio_io::{write_manifest, write_wav, AudioClip, ClipAnnotation, Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::stats::derive_seed;

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Engine fundamentals in a dataset are quoted at this speed.
pub const REFERENCE_SPEED_KMH: f64 = 50.0;
const TIRE_CENTER_HZ: f64 = 1000.0;
const TIRE_Q: f64 = 0.7;

/// Observed frequency of a source moving toward the listener at `v_radial`.
pub fn doppler_frequency(f_src: f64, v_radial: f64, c: f64) -> Result<f64> {
    if v_radial.is_nan() || v_radial.abs() >= c {
        return Err(Error::Domain(format!("radial speed {v_radial} m/s is not below c = {c} m/s")));
    }
    Ok(f_src * c / (c - v_radial))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassBySpec {
    pub speed_kmh: f64,
    pub t_cpa_s: f64,
    pub cpa_distance_m: f64,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub engine_f0_hz: f64,
    pub n_harmonics: usize,
    pub harmonic_rolloff_db: f64,
    pub broadband_level: f64,
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default)]
    pub vehicle_id: String,
}

impl Default for PassBySpec {
    fn default() -> Self {
        Self {
            speed_kmh: 50.0,
            t_cpa_s: 5.0,
            cpa_distance_m: 6.0,
            duration_s: 10.0,
            sample_rate: 44_100,
            engine_f0_hz: 100.0,
            n_harmonics: 10,
            harmonic_rolloff_db: 3.0,
            broadband_level: 0.3,
            snr_db: 20.0,
            seed: 0,
            vehicle_id: "synthetic".into(),
        }
    }
}

impl PassBySpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.speed_kmh > 0.0 && self.speed_kmh / 3.6 < SPEED_OF_SOUND) {
            bad.push(format!("speed_kmh must be positive and subsonic, got {}", self.speed_kmh));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            bad.push(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(self.t_cpa_s > 0.0 && self.t_cpa_s < self.duration_s) {
            bad.push(format!("t_cpa_s must lie inside (0, {}), got {}", self.duration_s, self.t_cpa_s));
        }
        if !(self.cpa_distance_m > 0.0 && self.cpa_distance_m.is_finite()) {
            bad.push(format!("cpa_distance_m must be positive, got {}", self.cpa_distance_m));
        }
        if self.sample_rate == 0 {
            bad.push("sample_rate must be positive".into());
        }
        if !(self.engine_f0_hz > 0.0 && self.engine_f0_hz.is_finite()) {
            bad.push(format!("engine_f0_hz must be positive, got {}", self.engine_f0_hz));
        }
        if !(self.harmonic_rolloff_db >= 0.0 && self.harmonic_rolloff_db.is_finite()) {
            bad.push(format!("harmonic_rolloff_db must be non-negative, got {}", self.harmonic_rolloff_db));
        }
        if !(self.broadband_level >= 0.0 && self.broadband_level.is_finite()) {
            bad.push(format!("broadband_level must be non-negative, got {}", self.broadband_level));
        }
        if self.n_harmonics == 0 && self.broadband_level == 0.0 {
            bad.push("the source is silent: no harmonics and no broadband noise".into());
        }
        if !self.snr_db.is_finite() {
            bad.push(format!("snr_db must be finite, got {}", self.snr_db));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// RBJ band-pass biquad with 0 dB peak gain.
struct BandPass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BandPass {
    fn new(center_hz: f64, q: f64, sample_rate: f64) -> Self {
        let w0 = TAU * center_hz / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Pink noise with unit RMS (Paul Kellett's refined filter).
fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut step = |w: f64| {
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        let out = b.iter().sum::<f64>() + w * 0.5362;
        b[6] = w * 0.115926;
        out
    };
    // Let the slowest pole settle.
    for _ in 0..8192 {
        step(rng.sample(StandardNormal));
    }
    let mut out: Vec<f64> = (0..n).map(|_| step(rng.sample(StandardNormal))).collect();
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|x| *x /= rms);
    }
    out
}

fn to_clip(samples: Vec<f64>, sample_rate: u32) -> Result<AudioClip> {
    AudioClip::new(samples.into_iter().map(|x| x as f32).collect(), sample_rate)
}

pub fn synth_passby(spec: &PassBySpec) -> Result<(AudioClip, ClipAnnotation)> {
    spec.validate()?;
    let sr = spec.sample_rate as f64;
    let n = (spec.duration_s * sr).round() as usize;
    let v = spec.speed_kmh / 3.6;
    let d = spec.cpa_distance_m;
    let c = SPEED_OF_SOUND;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Keep every harmonic below 0.45 sr even at the largest Doppler factor.
    let max_factor = c / (c - v);
    let n_harm = (1..=spec.n_harmonics).take_while(|&k| k as f64 * spec.engine_f0_hz * max_factor < 0.45 * sr).count();
    let mut amps: Vec<f64> = (0..n_harm).map(|k| 10f64.powf(-spec.harmonic_rolloff_db * k as f64 / 20.0)).collect();
    let total: f64 = amps.iter().sum();
    amps.iter_mut().for_each(|a| *a /= total.max(f64::MIN_POSITIVE));
    let phases: Vec<f64> = (0..n_harm).map(|_| rng.random::<f64>() * TAU).collect();

    let tire_gain = spec.broadband_level * (spec.speed_kmh / REFERENCE_SPEED_KMH).powf(1.5);
    let mut tire = BandPass::new(TIRE_CENTER_HZ, TIRE_Q, sr);

    let mut signal = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    for i in 0..n {
        let t = i as f64 / sr;
        let x = v * (t - spec.t_cpa_s);
        let r = x.hypot(d);
        let v_radial = -x * v / r;
        let mut s: f64 =
            amps.iter().zip(&phases).enumerate().map(|(k, (a, p))| a * ((k + 1) as f64 * phase + p).sin()).sum();
        let w: f64 = rng.sample(StandardNormal);
        s += tire_gain * tire.step(w);
        signal.push(s / r);
        phase = (phase + TAU * spec.engine_f0_hz * c / (c - v_radial) / sr) % TAU;
    }

    let lo = ((spec.t_cpa_s - 1.0) * sr).max(0.0) as usize;
    let hi = (((spec.t_cpa_s + 1.0) * sr) as usize).min(n);
    let p_signal = signal[lo..hi].iter().map(|x| x * x).sum::<f64>() / (hi - lo).max(1) as f64;
    let noise_rms = (p_signal / 10f64.powf(spec.snr_db / 10.0)).sqrt();
    let ambient = pink_noise(n, &mut rng);
    for (s, a) in signal.iter_mut().zip(&ambient) {
        *s += noise_rms * a;
    }

    let clip = to_clip(signal, spec.sample_rate)?;
    let annotation = ClipAnnotation::vehicle(spec.vehicle_id.clone(), spec.speed_kmh, spec.t_cpa_s);
    Ok((clip, annotation))
}

/// Pink noise normalized to unit peak.
pub fn synth_noise(duration_s: f64, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    if !(duration_s > 0.0 && duration_s.is_finite()) || sample_rate == 0 {
        return Err(Error::Config(format!(
            "noise clip needs positive duration and sample rate, got {duration_s} s at {sample_rate} Hz"
        )));
    }
    let n = ((duration_s * sample_rate as f64).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = pink_noise(n, &mut rng);
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        // f32 rounding must not push the peak above one.
        let scale = (1.0 - 1e-6) / peak;
        x.iter_mut().for_each(|v| *v *= scale);
    }
    to_clip(x, sample_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleProfile {
    pub vehicle_id: String,
    /// Engine fundamental at the reference speed.
    pub engine_f0_hz: f64,
    pub n_harmonics: usize,
    pub harmonic_rolloff_db: f64,
    pub broadband_level: f64,
    /// Explicit clip speeds; drawn from the dataset range when empty.
    #[serde(default)]
    pub speeds_kmh: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDatasetSpec {
    pub vehicles: Vec<VehicleProfile>,
    pub clips_per_vehicle: usize,
    pub speed_range_kmh: [f64; 2],
    pub noise_clips: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub t_cpa_range_s: [f64; 2],
    pub cpa_distance_range_m: [f64; 2],
    pub snr_range_db: [f64; 2],
    /// Scale each vehicle's fundamental with speed relative to the reference speed.
    pub speed_correlated_f0: bool,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for SynthDatasetSpec {
    fn default() -> Self {
        Self::ten_vehicles("synthetic", 0)
    }
}

impl SynthDatasetSpec {
    /// Ten vehicles with thirty clips each at 30 to 105 km/h, plus 71 noise clips.
    pub fn ten_vehicles(output_dir: impl Into<PathBuf>, master_seed: u64) -> Self {
        let vehicles = (0..10)
            .map(|i| VehicleProfile {
                vehicle_id: format!("V{:02}", i + 1),
                engine_f0_hz: 92.0 + 16.0 * ((i * 7) % 10) as f64 / 9.0,
                n_harmonics: 8 + (i * 3) % 9,
                harmonic_rolloff_db: 2.0 + 0.75 * (i % 4) as f64,
                broadband_level: 0.15 + 0.05 * (i % 5) as f64,
                speeds_kmh: Vec::new(),
            })
            .collect();
        Self {
            vehicles,
            clips_per_vehicle: 30,
            speed_range_kmh: [30.0, 105.0],
            noise_clips: 71,
            duration_s: 10.0,
            sample_rate: 44_100,
            t_cpa_range_s: [3.0, 7.0],
            cpa_distance_range_m: [4.0, 8.0],
            snr_range_db: [10.0, 20.0],
            speed_correlated_f0: true,
            output_dir: output_dir.into(),
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        for (name, r) in [
            ("speed_range_kmh", self.speed_range_kmh),
            ("t_cpa_range_s", self.t_cpa_range_s),
            ("cpa_distance_range_m", self.cpa_distance_range_m),
            ("snr_range_db", self.snr_range_db),
        ] {
            if !range_ok(r) {
                bad.push(format!("{name} must be an ordered finite pair, got {r:?}"));
            }
        }
        if self.vehicles.len() < 2 {
            bad.push(format!("need at least 2 vehicles, got {}", self.vehicles.len()));
        }
        let mut ids: Vec<&str> = self.vehicles.iter().map(|v| v.vehicle_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.iter().any(|id| id.is_empty()) {
            bad.push("vehicle ids must be unique and non-empty".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Clip specs for every vehicle clip, in manifest order.
    pub fn passby_specs(&self) -> Vec<PassBySpec> {
        let mut out = Vec::new();
        for (vi, vehicle) in self.vehicles.iter().enumerate() {
            let n = if vehicle.speeds_kmh.is_empty() { self.clips_per_vehicle } else { vehicle.speeds_kmh.len() };
            for ci in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, &[vi as u64, ci as u64, 0]));
                let mut draw = |r: [f64; 2]| r[0] + (r[1] - r[0]) * rng.random::<f64>();
                let speed = match vehicle.speeds_kmh.get(ci) {
                    Some(&s) => s,
                    None => (draw(self.speed_range_kmh) * 10.0).round() / 10.0,
                };
                let t_cpa = (draw(self.t_cpa_range_s) * 1000.0).round() / 1000.0;
                let distance = draw(self.cpa_distance_range_m);
                let snr = draw(self.snr_range_db);
                let f0 = if self.speed_correlated_f0 {
                    vehicle.engine_f0_hz * speed / REFERENCE_SPEED_KMH
                } else {
                    vehicle.engine_f0_hz
                };
                out.push(PassBySpec {
                    speed_kmh: speed,
                    t_cpa_s: t_cpa,
                    cpa_distance_m: distance,
                    duration_s: self.duration_s,
                    sample_rate: self.sample_rate,
                    engine_f0_hz: f0,
                    n_harmonics: vehicle.n_harmonics,
                    harmonic_rolloff_db: vehicle.harmonic_rolloff_db,
                    broadband_level: vehicle.broadband_level,
                    snr_db: snr,
                    seed: derive_seed(self.master_seed, &[vi as u64, ci as u64, 1]),
                    vehicle_id: vehicle.vehicle_id.clone(),
                });
            }
        }
        out
    }
}

enum Job {
    Vehicle(PassBySpec, String),
    Noise(u64, String),
}

/// Writes every clip and `manifest.csv` into the output directory.
pub fn synth_dataset(spec: &SynthDatasetSpec) -> Result<Manifest> {
    spec.validate()?;
    let dir = &spec.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut jobs = Vec::new();
    let mut counters = std::collections::HashMap::<String, usize>::new();
    for p in spec.passby_specs() {
        let k = counters.entry(p.vehicle_id.clone()).or_default();
        let name = format!("{}_{:03}.wav", p.vehicle_id, *k);
        *k += 1;
        jobs.push(Job::Vehicle(p, name));
    }
    for j in 0..spec.noise_clips {
        jobs.push(Job::Noise(derive_seed(spec.master_seed, &[u64::MAX, j as u64]), format!("noise_{j:03}.wav")));
    }

    let entries = par_map(&jobs, |job| {
        let (clip, annotation, name) = match job {
            Job::Vehicle(p, name) => {
                let (clip, a) = synth_passby(p)?;
                (clip, a, name)
            }
            Job::Noise(seed, name) => {
                (synth_noise(spec.duration_s, spec.sample_rate, *seed)?, ClipAnnotation::noise(), name)
            }
        };
        write_wav(dir.join(name), &clip)?;
        Ok(ManifestEntry { path: PathBuf::from(name), annotation })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { entries, base_dir: dir.clone() };
    write_manifest(dir.join("manifest.csv"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doppler_examples() {
        assert_eq!(doppler_frequency(100.0, 0.0, 343.0).unwrap(), 100.0);
        let f = doppler_frequency(100.0, 20.0, 343.0).unwrap();
        assert!((f - 100.0 * 343.0 / 323.0).abs() < 1e-12);
        assert!((f - 106.19).abs() < 5e-3);
        let (c, v, f0) = (343.0, 25.0, 440.0);
        let prod = doppler_frequency(f0, v, c).unwrap() * doppler_frequency(f0, -v, c).unwrap();
        assert!((prod - f0 * f0 * c * c / (c * c - v * v)).abs() < 1e-9);
        assert!(matches!(doppler_frequency(100.0, 343.0, 343.0), Err(Error::Domain(_))));
        assert!(matches!(doppler_frequency(100.0, -400.0, 343.0), Err(Error::Domain(_))));
    }

    #[test]
    fn passby_is_deterministic_and_annotated() {
        let spec = PassBySpec { duration_s: 2.0, t_cpa_s: 1.2, ..PassBySpec::default() };
        let (a, ann) = synth_passby(&spec).unwrap();
        let (b, _) = synth_passby(&spec).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_eq!(a.len(), 88_200);
        assert_eq!(ann.t_cpa_s, Some(1.2));
        assert_eq!(ann.speed_kmh, Some(50.0));
        let (c, _) = synth_passby(&PassBySpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn invalid_passby_specs() {
        for bad in [
            PassBySpec { speed_kmh: 0.0, ..PassBySpec::default() },
            PassBySpec { t_cpa_s: 10.0, ..PassBySpec::default() },
            PassBySpec { cpa_distance_m: -1.0, ..PassBySpec::default() },
        ] {
            assert!(matches!(synth_passby(&bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn noise_clip_properties() {
        let a = synth_noise(2.0, 16_000, 3).unwrap();
        let b = synth_noise(2.0, 16_000, 4).unwrap();
        assert_ne!(a.samples(), b.samples());
        assert!(a.samples().iter().all(|x| x.abs() <= 1.0));
        let half = a.len() / 2;
        let rms = |s: &[f32]| (s.iter().map(|x| (*x as f64).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
        let (r1, r2) = (rms(&a.samples()[..half]), rms(&a.samples()[half..]));
        assert!((r1 / r2 - 1.0).abs() < 0.2, "{r1} vs {r2}");
    }

    #[test]
    fn ten_vehicle_profile_counts() {
        let mut spec = SynthDatasetSpec::ten_vehicles("unused", 1);
        spec.noise_clips = 0;
        let clips = spec.passby_specs();
        assert_eq!(clips.len(), 300);
        assert!(clips.iter().all(|c| (30.0..=105.0).contains(&c.speed_kmh)));
        assert_eq!(clips, spec.passby_specs());
    }
}
