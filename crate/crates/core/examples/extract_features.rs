//! Computes the mel spectrogram, log-mel spectrogram and MFCC of a clip.

use passby::features::{FeatureConfig, FeatureExtractor, FeatureKind};
use passby::synthgen::{synth_passby, PassBySpec};

pub fn run_example() -> passby::Result<()> {
    let (clip, annotation) = synth_passby(&PassBySpec { speed_kmh: 60.0, seed: 5, ..PassBySpec::default() })?;
    let extractor = FeatureExtractor::new(FeatureConfig::default(), clip.sample_rate())?;
    let features = extractor.compute(&clip)?;
    for kind in FeatureKind::ALL {
        let m = features.get(kind);
        println!("{kind}: {} frames x {} bands, frame period {:.4} s", m.n_frames(), m.n_bands(), m.frame_period_s);
    }

    let lms = &features.lms;
    let cpa = lms.frame_at(annotation.t_cpa_s.unwrap_or_default());
    let energy = |f: usize| lms.values.row(f).sum() / lms.n_bands() as f64;
    println!("mean log-mel level: {:.1} dB at the CPA frame, {:.1} dB in the first frame", energy(cpa), energy(0));

    let out = std::env::temp_dir().join("passby-examples/extract_features");
    std::fs::create_dir_all(&out).map_err(|e| passby::Error::Input(e.to_string()))?;
    passby::features::write_feature_csv(out.join("lms.csv"), lms)?;
    println!("wrote {}", out.join("lms.csv").display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> passby::Result<()> {
    run_example()
}
