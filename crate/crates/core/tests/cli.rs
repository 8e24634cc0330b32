use std::path::Path;
use std::process::{Command, Output};

mod common;
use common::tiny_config;

fn passby(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_passby")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = passby(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    let spec = serde_json::json!({
        "vehicles": [
            {"vehicle_id": "car", "engine_f0_hz": 95.0, "n_harmonics": 6, "harmonic_rolloff_db": 3.0, "broadband_level": 0.3, "speeds_kmh": []},
            {"vehicle_id": "van", "engine_f0_hz": 105.0, "n_harmonics": 6, "harmonic_rolloff_db": 3.0, "broadband_level": 0.3, "speeds_kmh": []}
        ],
        "clips_per_vehicle": 3,
        "noise_clips": 2,
        "duration_s": 3.0,
        "t_cpa_range_s": [1.2, 1.8]
    });
    std::fs::write(d.join("spec.json"), spec.to_string()).unwrap();
    std::fs::write(d.join("config.json"), tiny_config().to_json().unwrap()).unwrap();
    let config = d.join("config.json");

    ok(&["synth", "--spec", s(&d.join("spec.json")), "--out", s(&data), "--seed", "3"]);
    let manifest = data.join("manifest.csv");
    assert_eq!(std::fs::read_to_string(&manifest).unwrap().lines().count(), 9);
    let wav = data.join("car_000.wav");

    ok(&["features", "--wav", s(&wav), "--out", s(&d.join("feat")), "--config", s(&config)]);
    for name in ["ms.csv", "lms.csv", "mfcc.csv"] {
        assert!(d.join("feat").join(name).exists(), "{name}");
    }

    ok(&["train-detector", "--manifest", s(&manifest), "--out", s(&d.join("models")), "--config", s(&config)]);
    let detector = d.join("models/detector.json");
    let curve = d.join("curve.csv");
    let detected: serde_json::Value = serde_json::from_str(&ok(&[
        "detect",
        "--model",
        s(&detector),
        "--wav",
        s(&wav),
        "--curve",
        s(&curve),
        "--config",
        s(&config),
    ]))
    .unwrap();
    for key in ["t_cpa_hat", "min_cvmd", "vehicle_present"] {
        assert!(detected.get(key).is_some(), "{key} missing from {detected}");
    }
    let curve_text = std::fs::read_to_string(&curve).unwrap();
    assert!(curve_text.starts_with("frame,time_s,cvmd_s"));
    assert_eq!(curve_text.lines().count(), 1 + 120);

    ok(&[
        "train-speed",
        "--manifest",
        s(&manifest),
        "--out",
        s(&d.join("models")),
        "--representation",
        "lms",
        "--config",
        s(&config),
    ]);
    let speed = d.join("models/speed_lms.json");
    let est: serde_json::Value = serde_json::from_str(&ok(&[
        "estimate",
        "--detector",
        s(&detector),
        "--speed",
        s(&speed),
        "--wav",
        s(&wav),
        "--config",
        s(&config),
    ]))
    .unwrap();
    assert!(est["detection"]["t_cpa_hat"].is_number());
    if est["detection"]["vehicle_present"].as_bool().unwrap() {
        assert!(est["speed"]["speed_kmh"].is_number());
    } else {
        assert!(est["speed"].is_null());
    }

    let cv = d.join("cv");
    let summary = ok(&["cross-validate", "--manifest", s(&manifest), "--out", s(&cv), "--config", s(&config)]);
    assert!(summary.contains("RMSE"), "{summary}");
    let report_bytes = std::fs::read(cv.join("report.json")).unwrap();

    let again = d.join("again");
    ok(&["report", "--report", s(&cv.join("report.json")), "--out", s(&again)]);
    assert_eq!(std::fs::read(again.join("report.json")).unwrap(), report_bytes);
    assert_eq!(std::fs::read(again.join("speed_rmse.csv")).unwrap(), std::fs::read(cv.join("speed_rmse.csv")).unwrap());
}

#[test]
fn missing_manifest_names_the_flag() {
    let out = passby(&["cross-validate", "--manifest", "/nonexistent/manifest.csv", "--out", "/tmp/never"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--manifest") && err.contains("/nonexistent/manifest.csv"), "{err}");
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(passby::cli::run_cli(["passby", "detect"]), 2);
    assert_eq!(passby::cli::run_cli(["passby", "no-such-command"]), 2);
    assert_eq!(passby::cli::run_cli(["passby", "report", "--report", "/nonexistent.json", "--out", "/tmp/x"]), 1);
}
