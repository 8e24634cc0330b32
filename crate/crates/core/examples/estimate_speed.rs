//! Trains speed regressors on features taken at the true CPA and evaluates
//! them on held-out clips of an unseen vehicle.

use passby::features::{FeatureConfig, FeatureExtractor, FeatureKind, MelFeatures};
use passby::speed::{class_accuracy, rmse, speed_class, train_speed_model, SpeedExample, SpeedFeatureSpec};
use passby::svr::SvrConfig;
use passby::synthgen::{synth_passby, SynthDatasetSpec};

pub fn run_example() -> passby::Result<()> {
    let mut spec = SynthDatasetSpec::ten_vehicles("unused", 21);
    spec.vehicles.truncate(4);
    spec.clips_per_vehicle = 12;
    let extractor = FeatureExtractor::new(FeatureConfig::default(), spec.sample_rate)?;
    let mut clips: Vec<(MelFeatures, passby::audio_io::ClipAnnotation)> = Vec::new();
    for p in spec.passby_specs() {
        let (clip, annotation) = synth_passby(&p)?;
        clips.push((extractor.compute(&clip)?, annotation));
    }
    let held_out = "V04";
    let (test, train): (Vec<_>, Vec<_>) = clips.iter().partition(|(_, a)| a.vehicle_id == held_out);

    for kind in FeatureKind::ALL {
        let fspec = SpeedFeatureSpec::for_kind(kind);
        let examples: Vec<SpeedExample<'_>> =
            train.iter().map(|(f, a)| SpeedExample { features: f.get(kind), annotation: a }).collect();
        let model = train_speed_model(&examples, &fspec, &SvrConfig::default())?;
        let mut est = Vec::new();
        let mut truth = Vec::new();
        for (f, a) in &test {
            let fm = f.get(kind);
            est.push(model.predict_at(fm, fm.frame_at(a.t_cpa_s.unwrap_or_default()))?);
            truth.push(a.speed_kmh.unwrap_or_default());
        }
        let speeds: Vec<f64> = est.iter().map(|e| e.speed_kmh).collect();
        let classes: Vec<usize> = est.iter().map(|e| e.class_index).collect();
        let true_classes: Vec<usize> = truth.iter().map(|&v| speed_class(v)).collect();
        println!(
            "{kind} ({} features): RMSE {:.2} km/h, class accuracy {:.0}% exact, {:.0}% within one class",
            fspec.vector_len()?,
            rmse(&speeds, &truth)?,
            100.0 * class_accuracy(&classes, &true_classes, 0)?,
            100.0 * class_accuracy(&classes, &true_classes, 1)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> passby::Result<()> {
    run_example()
}
