//! Runs the augmentation pipeline over a small generated pool and replays
//! each output from its provenance string.

use tsweave::augment::{augment_pipeline, parse_provenance, replay, AugmentationConfig};
use tsweave::generators::{generate, GeneratorKind, GeneratorSettings, Source};
use tsweave::seed;
use tsweave::timeseries::Frequency;

fn main() -> tsweave::Result<()> {
    let settings = GeneratorSettings::default();
    let kinds = [GeneratorKind::SineWave, GeneratorKind::Sawtooth, GeneratorKind::Step, GeneratorKind::KernelSynth];
    let mut pool = Vec::new();
    for (i, k) in kinds.iter().enumerate() {
        let mut rng = seed::rng_for(1, "pool", i as u64);
        pool.extend(generate(Source::Generator(*k), &mut rng, 256, Frequency::DAILY, &settings)?);
    }
    let cfg = AugmentationConfig::default();
    for i in 0..5 {
        let mut rng = seed::rng_for(2, "augment", i);
        let out = augment_pipeline(&pool, &mut rng, &cfg)?;
        let again = replay(&pool, &parse_provenance(&out.provenance)?, &cfg)?;
        println!("{}", out.provenance);
        println!("  replay identical: {}", again.values == out.values);
    }
    Ok(())
}
