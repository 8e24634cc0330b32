use std::path::{Path, PathBuf};

use passby::audio_io::{
    load_manifest, read_wav, write_manifest, write_wav, AudioClip, ClipAnnotation, Manifest, ManifestEntry,
};
use passby::Error;

fn write_with_hound<T: hound::Sample + Copy>(path: &Path, spec: hound::WavSpec, samples: &[T]) {
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

fn float_spec(channels: u16) -> hound::WavSpec {
    hound::WavSpec { channels, sample_rate: 44_100, bits_per_sample: 32, sample_format: hound::SampleFormat::Float }
}

#[test]
fn ten_second_float_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ten.wav");
    let samples: Vec<f32> = (0..441_000).map(|i| ((i as f32) * 0.001).sin() * 0.5).collect();
    write_with_hound(&path, float_spec(1), &samples);
    let clip = read_wav(&path).unwrap();
    assert_eq!(clip.len(), 441_000);
    assert_eq!(clip.sample_rate(), 44_100);
    assert!((clip.duration_s() - 10.0).abs() < 1e-12);
    assert_eq!(clip.samples(), &samples[..]);
}

#[test]
fn silent_file_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zeros.wav");
    write_with_hound(&path, float_spec(1), &vec![0.0f32; 1000]);
    assert!(read_wav(&path).unwrap().samples().iter().all(|&s| s == 0.0));
}

#[test]
fn opposite_stereo_channels_cancel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stereo.wav");
    let interleaved: Vec<f32> = (0..500)
        .flat_map(|i| {
            let x = (i as f32 * 0.37).cos() * 0.8;
            [x, -x]
        })
        .collect();
    write_with_hound(&path, float_spec(2), &interleaved);
    let clip = read_wav(&path).unwrap();
    assert_eq!(clip.len(), 500);
    assert!(clip.samples().iter().all(|&s| s == 0.0));
}

#[test]
fn float_round_trip_keeps_out_of_range_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loud.wav");
    let samples = vec![0.0, 1.5, -1.5, 0.25, f32::MIN_POSITIVE, -0.999];
    let clip = AudioClip::new(samples.clone(), 22_050).unwrap();
    write_wav(&path, &clip).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.samples(), &samples[..]);
    assert_eq!(back.sample_rate(), 22_050);
}

#[test]
fn empty_clip_cannot_be_written() {
    let dir = tempfile::tempdir().unwrap();
    let empty = AudioClip::new(vec![], 44_100);
    if let Ok(clip) = empty {
        assert!(matches!(write_wav(dir.path().join("e.wav"), &clip), Err(Error::Precondition(_))));
    }
}

#[test]
fn int16_is_scaled_to_unit_range() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pcm16.wav");
    let spec =
        hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    write_with_hound(&path, spec, &[0i16, 16384, -32768, 32767]);
    let clip = read_wav(&path).unwrap();
    assert_eq!(clip.samples(), &[0.0, 0.5, -1.0, 32767.0 / 32768.0]);
}

#[test]
fn malformed_and_unsupported_files() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"RIFF\x10\x00\x00\x00WAVEnot a real chunk").unwrap();
    assert!(matches!(read_wav(&junk), Err(Error::Format { .. })), "{:?}", read_wav(&junk));

    let pcm8 = dir.path().join("pcm8.wav");
    let spec =
        hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 8, sample_format: hound::SampleFormat::Int };
    write_with_hound(&pcm8, spec, &[0i8, 10, -10]);
    assert!(matches!(read_wav(&pcm8), Err(Error::Unsupported { .. })));

    assert!(matches!(read_wav(dir.path().join("missing.wav")), Err(Error::Io { .. })));
}

const HEADER: &str = "path,vehicle_id,speed_kmh,t_cpa_s,has_vehicle\n";

#[test]
fn manifest_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.csv");
    std::fs::write(&path, format!("{HEADER}a.wav,nissan,60,4.93,true\nn.wav,,,,false\n")).unwrap();
    let m = load_manifest(&path).unwrap();
    assert_eq!(m.entries[0].annotation, ClipAnnotation::vehicle("nissan", 60.0, 4.93));
    assert_eq!(m.entries[1].annotation, ClipAnnotation::noise());
    assert_eq!(m.resolve(&m.entries[0]), dir.path().join("a.wav"));

    std::fs::write(&path, format!("{HEADER}a.wav,nissan,,4.93,true\n")).unwrap();
    match load_manifest(&path) {
        Err(Error::Validation(rows)) => assert!(rows[0].contains("line 2"), "{rows:?}"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manifest {
        entries: vec![
            ManifestEntry {
                path: PathBuf::from("v/a_000.wav"),
                annotation: ClipAnnotation::vehicle("a", 47.25, 3.125),
            },
            ManifestEntry { path: PathBuf::from("noise_000.wav"), annotation: ClipAnnotation::noise() },
        ],
        base_dir: dir.path().to_path_buf(),
    };
    let path = dir.path().join("m.csv");
    write_manifest(&path, &m).unwrap();
    assert_eq!(load_manifest(&path).unwrap(), m);
}
