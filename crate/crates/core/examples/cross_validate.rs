//! Leave-one-vehicle-out cross-validation on a small synthetic dataset,
//! writing the report, speed tables and histograms.

use passby::harness::{cross_validate, write_report, ExperimentConfig};
use passby::neural::TrainConfig;
use passby::synthgen::{synth_dataset, SynthDatasetSpec};

pub fn run_example() -> passby::Result<()> {
    let root = std::env::temp_dir().join("passby-examples/cross_validate");
    let mut spec = SynthDatasetSpec::ten_vehicles(root.join("data"), 5);
    spec.vehicles.truncate(3);
    spec.clips_per_vehicle = 8;
    spec.noise_clips = 6;
    let manifest = synth_dataset(&spec)?;

    let mut cfg = ExperimentConfig::benchmark();
    cfg.detector.stage1_frame_stride = 2;
    cfg.detector.stage1_train = TrainConfig { epochs: 12, ..TrainConfig::default() };
    cfg.detector.stage2_train = TrainConfig { epochs: 10, ..TrainConfig::default() };
    let report = cross_validate(&manifest, &cfg)?;
    let files = write_report(&report, root.join("results"))?;

    let d = &report.detection;
    println!("{} folds, offset mean {:+.3} s, std {:.3} s", d.n_folds, d.offset_mean, d.offset_std);
    println!("stage 1 alone: offset std {:.3} s", d.one_stage_offset_std);
    println!("{:>8} {:>10} {:>10} {:>10}", "vehicle", "MS", "LMS", "MFCC");
    for row in &report.speed_table {
        println!("{:>8} {:>10.2} {:>10.2} {:>10.2}", row.vehicle_id, row.rmse[0], row.rmse[1], row.rmse[2]);
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> passby::Result<()> {
    run_example()
}
