//! Trains the two-stage CPA detector on a few synthetic clips and runs it on
//! an unseen pass-by and an unseen noise clip.

use passby::audio_io::ClipAnnotation;
use passby::detection::{train_detector, DetectorConfig, DetectorExample};
use passby::features::{FeatureConfig, FeatureExtractor, FeatureMatrix};
use passby::neural::TrainConfig;
use passby::synthgen::{synth_noise, synth_passby, PassBySpec};

fn lms(extractor: &FeatureExtractor, clip: &passby::audio_io::AudioClip) -> passby::Result<FeatureMatrix> {
    Ok(extractor.compute(clip)?.lms)
}

pub fn run_example() -> passby::Result<()> {
    let extractor = FeatureExtractor::new(FeatureConfig::default(), 44_100)?;
    let mut clips: Vec<(FeatureMatrix, ClipAnnotation)> = Vec::new();
    for i in 0..10u64 {
        let spec = PassBySpec {
            speed_kmh: 35.0 + 7.0 * i as f64,
            t_cpa_s: 2.5 + 0.5 * i as f64,
            engine_f0_hz: 70.0 + 8.0 * i as f64,
            snr_db: 15.0,
            seed: i,
            ..PassBySpec::default()
        };
        let (clip, annotation) = synth_passby(&spec)?;
        clips.push((lms(&extractor, &clip)?, annotation));
    }
    for i in 0..4 {
        clips.push((lms(&extractor, &synth_noise(10.0, 44_100, 100 + i)?)?, ClipAnnotation::noise()));
    }
    let examples: Vec<DetectorExample<'_>> =
        clips.iter().map(|(lms, annotation)| DetectorExample { lms, annotation }).collect();
    let (train, val): (Vec<_>, Vec<_>) = examples.iter().enumerate().partition(|(i, _)| i % 4 != 0);
    let train: Vec<_> = train.into_iter().map(|(_, e)| *e).collect();
    let val: Vec<_> = val.into_iter().map(|(_, e)| *e).collect();

    let cfg = DetectorConfig {
        stage1_frame_stride: 4,
        stage1_train: TrainConfig { epochs: 10, ..TrainConfig::default() },
        stage2_train: TrainConfig { epochs: 10, ..TrainConfig::default() },
        ..DetectorConfig::default()
    };
    let (model, report) = train_detector(&train, &val, &cfg)?;
    println!(
        "stage 1 best validation MSE {:.4}, presence threshold {:.3} s (training gap {:.3} s)",
        report.stage1.val_loss[report.stage1.best_epoch], model.presence.threshold, model.presence.gap
    );

    let unseen = PassBySpec {
        speed_kmh: 64.0,
        t_cpa_s: 6.1,
        engine_f0_hz: 95.0,
        snr_db: 15.0,
        seed: 77,
        ..PassBySpec::default()
    };
    let (clip, _) = synth_passby(&unseen)?;
    let result = model.detect(&lms(&extractor, &clip)?)?;
    println!(
        "pass-by: CPA estimated at {:.3} s (true {:.3} s), min CVMD {:.3} s, vehicle present: {}",
        result.t_cpa_hat, unseen.t_cpa_s, result.min_cvmd, result.vehicle_present
    );
    let noise = model.detect(&lms(&extractor, &synth_noise(10.0, 44_100, 999)?)?)?;
    println!("noise: min CVMD {:.3} s, vehicle present: {}", noise.min_cvmd, noise.vehicle_present);
    Ok(())
}

#[allow(dead_code)]
fn main() -> passby::Result<()> {
    run_example()
}
