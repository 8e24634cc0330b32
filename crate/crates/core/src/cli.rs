//! Command-line front end. Every subcommand reads JSON configs and manifests
//! named by flags and writes its outputs to `--out`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audio_io::{load_manifest, read_wav, AudioClip, Manifest};
use crate::detection::{estimate_cpa, train_detector, DetectionModel, DetectionResult, DetectorExample};
use crate::error::{Error, Result};
use crate::features::{write_feature_csv, FeatureExtractor, FeatureKind};
use crate::harness::{cross_validate, load_features, write_report, ExperimentConfig, ExperimentReport, TRAIN_SPLIT};
use crate::speed::{predict_speed, train_speed_model, SpeedEstimate, SpeedExample, SpeedFeatureSpec, SpeedModel};
use crate::stats::derive_seed;
use crate::synthgen::{synth_dataset, SynthDatasetSpec};

#[derive(Parser, Debug)]
#[command(name = "passby", version, about = "Vehicle pass-by detection and speed estimation from audio")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Full,
    Benchmark,
}

#[derive(clap::Args, Debug)]
struct ConfigArgs {
    /// Experiment config JSON; overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    preset: Preset,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (WAV clips and manifest.csv).
    Synth {
        /// Dataset spec JSON; defaults to the ten-vehicle profile.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write MS, LMS and MFCC matrices of one clip as CSV.
    Features {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the CPA detector on every clip of a manifest.
    TrainDetector {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print t_cpa_hat, min_cvmd and vehicle_present of one clip as JSON.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        /// Also write the predicted CVMD curve here.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a speed regressor on the vehicle clips of a manifest.
    TrainSpeed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "ms")]
        representation: FeatureKind,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Detect the CPA of one clip and estimate the speed there.
    Estimate {
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        speed: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Leave-one-vehicle-out cross-validation; writes report.json and CSV tables.
    CrossValidate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-emit tables and histograms from a saved report.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Wraps an error with the flag whose value caused it.
fn flag<T>(name: &str, value: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Input(format!("--{name} {}: {e}", value.display())))
}

fn read_text(name: &str, path: &Path) -> Result<String> {
    flag(name, path, std::fs::read_to_string(path).map_err(|e| Error::io(path, e)))
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    match &args.config {
        Some(p) => flag("config", p, ExperimentConfig::from_json(&read_text("config", p)?)),
        None => Ok(match args.preset {
            Preset::Full => ExperimentConfig::full(),
            Preset::Benchmark => ExperimentConfig::benchmark(),
        }),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_wav(path: &Path) -> Result<AudioClip> {
    flag("wav", path, read_wav(path))
}

fn manifest(path: &Path) -> Result<Manifest> {
    flag("manifest", path, load_manifest(path))
}

#[derive(Serialize)]
struct EstimateOutput {
    detection: DetectionResult,
    speed: Option<SpeedEstimate>,
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, out, seed } => {
            let mut s = match &spec {
                Some(p) => flag("spec", p, serde_json::from_str(&read_text("spec", p)?).map_err(Error::from))?,
                None => SynthDatasetSpec::ten_vehicles(&out, 0),
            };
            s.output_dir = out;
            if let Some(seed) = seed {
                s.master_seed = seed;
            }
            let m = synth_dataset(&s)?;
            eprintln!("wrote {} clips to {}", m.entries.len(), s.output_dir.display());
        }
        Command::Features { wav, out, config } => {
            let cfg = load_config(&config)?;
            let clip = load_wav(&wav)?;
            let f = FeatureExtractor::new(cfg.features, clip.sample_rate())?.compute(&clip)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for kind in FeatureKind::ALL {
                write_feature_csv(out.join(format!("{kind}.csv")), f.get(kind))?;
            }
        }
        Command::TrainDetector { manifest: m, out, config } => {
            let cfg = load_config(&config)?;
            let data = load_features(&manifest(&m)?, &cfg.features)?;
            let mut order: Vec<usize> = (0..data.len()).collect();
            if order.len() < 2 {
                return Err(Error::Input(format!("--manifest {}: need at least 2 clips", m.display())));
            }
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[TRAIN_SPLIT])));
            let n_train = ((order.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, order.len() - 1);
            let examples = |idx: &[usize]| -> Vec<DetectorExample<'_>> {
                idx.iter()
                    .map(|&i| DetectorExample { lms: &data[i].features.lms, annotation: &data[i].entry.annotation })
                    .collect()
            };
            let (model, report) =
                train_detector(&examples(&order[..n_train]), &examples(&order[n_train..]), &cfg.detector)?;
            write_text(&out.join("detector.json"), &model.to_json()?)?;
            write_text(&out.join("detector_training.json"), &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Detect { model, wav, curve, config } => {
            let cfg = load_config(&config)?;
            let det = flag("model", &model, DetectionModel::from_json(&read_text("model", &model)?))?;
            let clip = load_wav(&wav)?;
            let f = FeatureExtractor::new(cfg.features, clip.sample_rate())?.compute(&clip)?;
            let c = det.predict_cvmd(&f.lms)?;
            if let Some(path) = curve {
                c.write_csv(path)?;
            }
            let (t_cpa_hat, min_cvmd) = estimate_cpa(&c)?;
            print_json(&DetectionResult { t_cpa_hat, min_cvmd, vehicle_present: min_cvmd < det.presence.threshold })?;
        }
        Command::TrainSpeed { manifest: m, out, representation, config } => {
            let cfg = load_config(&config)?;
            let spec = cfg
                .speed_features
                .iter()
                .find(|s| s.representation == representation)
                .copied()
                .unwrap_or_else(|| SpeedFeatureSpec::for_kind(representation));
            let data = load_features(&manifest(&m)?, &cfg.features)?;
            let examples: Vec<SpeedExample<'_>> = data
                .iter()
                .filter(|d| d.entry.annotation.has_vehicle)
                .map(|d| SpeedExample { features: d.features.get(representation), annotation: &d.entry.annotation })
                .collect();
            let model = train_speed_model(&examples, &spec, &cfg.svr)?;
            write_text(&out.join(format!("speed_{representation}.json")), &model.to_json()?)?;
        }
        Command::Estimate { detector, speed, wav, config } => {
            let cfg = load_config(&config)?;
            let det = flag("detector", &detector, DetectionModel::from_json(&read_text("detector", &detector)?))?;
            let sm = flag("speed", &speed, SpeedModel::from_json(&read_text("speed", &speed)?))?;
            let clip = load_wav(&wav)?;
            let f = FeatureExtractor::new(cfg.features, clip.sample_rate())?.compute(&clip)?;
            let detection = det.detect(&f.lms)?;
            let speed = if detection.vehicle_present {
                Some(predict_speed(&sm, f.get(sm.spec.representation), &detection)?)
            } else {
                None
            };
            print_json(&EstimateOutput { detection, speed })?;
        }
        Command::CrossValidate { manifest: m, out, config } => {
            let cfg = load_config(&config)?;
            let report = cross_validate(&manifest(&m)?, &cfg)?;
            write_report(&report, &out)?;
            print_summary(&report);
        }
        Command::Report { report, out } => {
            let r = flag("report", &report, ExperimentReport::from_json(&read_text("report", &report)?))?;
            write_report(&r, &out)?;
            print_summary(&r);
        }
    }
    Ok(())
}

fn print_summary(r: &ExperimentReport) {
    let d = &r.detection;
    println!(
        "detection offset mean {:.4} s, std {:.4} s (stage 1 alone: std {:.4} s)",
        d.offset_mean, d.offset_std, d.one_stage_offset_std
    );
    println!(
        "vehicle clips detected {:.1}%, folds with a positive gap {}/{}",
        100.0 * d.detection_rate,
        d.folds_with_positive_gap,
        d.n_folds
    );
    let avg = r.average();
    for (k, kind) in r.representations.iter().enumerate() {
        println!(
            "{kind}: RMSE {:.2} km/h, class accuracy {:.1}% exact, {:.1}% within one",
            avg.rmse[k],
            100.0 * avg.accuracy_exact[k],
            100.0 * avg.accuracy_adjacent[k]
        );
    }
}
