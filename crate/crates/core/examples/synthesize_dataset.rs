//! Writes a small synthetic dataset to disk and reads it back through the
//! manifest.

use passby::audio_io::{load_manifest, read_wav};
use passby::synthgen::{synth_dataset, SynthDatasetSpec};

pub fn run_example() -> passby::Result<()> {
    let out = std::env::temp_dir().join("passby-examples/synthesize_dataset");
    let mut spec = SynthDatasetSpec::ten_vehicles(&out, 2024);
    spec.vehicles.truncate(3);
    spec.clips_per_vehicle = 4;
    spec.noise_clips = 2;
    let written = synth_dataset(&spec)?;

    let manifest = load_manifest(out.join("manifest.csv"))?;
    assert_eq!(manifest.entries, written.entries);
    println!("{} clips of vehicles {:?}", manifest.entries.len(), manifest.vehicle_ids());
    for entry in &manifest.entries {
        let clip = read_wav(manifest.resolve(entry))?;
        let a = &entry.annotation;
        match (a.speed_kmh, a.t_cpa_s) {
            (Some(v), Some(t)) => {
                println!("{}: {:.1} s, {v:.1} km/h, CPA at {t:.3} s", entry.path.display(), clip.duration_s())
            }
            _ => println!("{}: {:.1} s, no vehicle", entry.path.display(), clip.duration_s()),
        }
    }
    println!("spec as JSON:\n{}", serde_json::to_string_pretty(&spec).map_err(passby::Error::from)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> passby::Result<()> {
    run_example()
}
