use passby::audio_io::{load_manifest, read_wav, AudioClip};
use passby::features::{stft_power, StftConfig};
use passby::synthgen::{synth_dataset, synth_passby, PassBySpec, SynthDatasetSpec, VehicleProfile};

/// RMS in consecutive 0.1 s windows, with the window centre times.
fn envelope(clip: &AudioClip) -> Vec<(f64, f64)> {
    let w = clip.sample_rate() as usize / 10;
    clip.samples()
        .chunks_exact(w)
        .enumerate()
        .map(|(i, c)| {
            let rms = (c.iter().map(|x| (*x as f64).powi(2)).sum::<f64>() / w as f64).sqrt();
            ((i as f64 + 0.5) * 0.1, rms)
        })
        .collect()
}

fn peak(env: &[(f64, f64)]) -> (f64, f64) {
    env.iter().copied().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
}

fn fwhm(env: &[(f64, f64)]) -> f64 {
    let (_, max) = peak(env);
    env.iter().filter(|(_, r)| *r >= max / 2.0).count() as f64 * 0.1
}

#[test]
fn envelope_peaks_at_cpa() {
    for (i, &(speed, t_cpa, snr)) in [(30.0, 2.5, 10.0), (70.0, 6.3, 12.0), (105.0, 4.05, 10.0)].iter().enumerate() {
        let spec =
            PassBySpec { speed_kmh: speed, t_cpa_s: t_cpa, snr_db: snr, seed: i as u64, ..PassBySpec::default() };
        let (clip, _) = synth_passby(&spec).unwrap();
        let (t, _) = peak(&envelope(&clip));
        assert!((t - t_cpa).abs() <= 0.2, "speed {speed}: envelope peak at {t}, cpa {t_cpa}");
    }
}

#[test]
fn doubling_distance_halves_peak_amplitude() {
    let near = PassBySpec { cpa_distance_m: 5.0, snr_db: 60.0, seed: 9, ..PassBySpec::default() };
    let far = PassBySpec { cpa_distance_m: 10.0, ..near.clone() };
    let a = peak(&envelope(&synth_passby(&near).unwrap().0)).1;
    let b = peak(&envelope(&synth_passby(&far).unwrap().0)).1;
    assert!((b / a - 0.5).abs() <= 0.025, "ratio {}", b / a);
}

#[test]
fn faster_passes_are_narrower() {
    let widths: Vec<f64> = [30.0, 60.0, 90.0]
        .iter()
        .map(|&v| {
            let spec = PassBySpec { speed_kmh: v, snr_db: 30.0, seed: 2, ..PassBySpec::default() };
            fwhm(&envelope(&synth_passby(&spec).unwrap().0))
        })
        .collect();
    assert!(widths[0] > widths[1] && widths[1] > widths[2], "{widths:?}");
}

#[test]
fn doppler_ridge_falls_through_the_source_frequency() {
    let spec = PassBySpec {
        speed_kmh: 90.0,
        cpa_distance_m: 5.0,
        engine_f0_hz: 1000.0,
        n_harmonics: 1,
        broadband_level: 0.0,
        snr_db: 40.0,
        ..PassBySpec::default()
    };
    let (clip, _) = synth_passby(&spec).unwrap();
    let power = stft_power(&clip, StftConfig::default()).unwrap();
    let bin_hz = clip.sample_rate() as f64 / 4096.0;
    let ridge = |t: f64| {
        let frame = ((t - power.t0_s) / power.frame_period_s).round() as usize;
        let row = power.values.row(frame);
        let k = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        k as f64 * bin_hz
    };
    let (before, after) = (ridge(spec.t_cpa_s - 2.0), ridge(spec.t_cpa_s + 2.0));
    assert!(before > 1000.0 + bin_hz && after < 1000.0 - bin_hz, "{before} / {after}");
}

#[test]
fn dataset_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mk = |sub: &str| SynthDatasetSpec {
        vehicles: vec![
            VehicleProfile {
                vehicle_id: "a".into(),
                engine_f0_hz: 100.0,
                n_harmonics: 4,
                harmonic_rolloff_db: 3.0,
                broadband_level: 0.2,
                speeds_kmh: vec![40.0, 80.0],
            },
            VehicleProfile {
                vehicle_id: "b".into(),
                engine_f0_hz: 110.0,
                n_harmonics: 4,
                harmonic_rolloff_db: 3.0,
                broadband_level: 0.2,
                speeds_kmh: vec![],
            },
        ],
        clips_per_vehicle: 2,
        noise_clips: 1,
        duration_s: 1.0,
        t_cpa_range_s: [0.4, 0.6],
        output_dir: tmp.path().join(sub),
        master_seed: 5,
        ..SynthDatasetSpec::default()
    };
    let m1 = synth_dataset(&mk("one")).unwrap();
    let m2 = synth_dataset(&mk("two")).unwrap();
    assert_eq!(m1.entries, m2.entries);
    assert_eq!(m1.entries.len(), 5);
    assert_eq!(m1.entries[1].annotation.speed_kmh, Some(80.0));
    assert!(!m1.entries[4].annotation.has_vehicle);
    for name in ["manifest.csv", "a_000.wav", "b_001.wav", "noise_000.wav"] {
        let a = std::fs::read(tmp.path().join("one").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("two").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let loaded = load_manifest(tmp.path().join("one/manifest.csv")).unwrap();
    assert_eq!(loaded.entries, m1.entries);
    let clip = read_wav(loaded.resolve(&loaded.entries[0])).unwrap();
    assert_eq!(clip.len(), 44_100);

    let quiet = SynthDatasetSpec { noise_clips: 0, output_dir: tmp.path().join("three"), ..mk("three") };
    let m3 = synth_dataset(&quiet).unwrap();
    assert!(m3.entries.iter().all(|e| e.annotation.has_vehicle));
}
