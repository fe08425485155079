//! Draws one series from every source and prints a short profile of each.
//!
//! cargo run --release --example generate_corpus

use tsweave::generators::{generate, GeneratorSettings, Source};
use tsweave::seed;
use tsweave::stats;
use tsweave::timeseries::Frequency;

fn main() -> tsweave::Result<()> {
    let settings = GeneratorSettings::default();
    println!("{:<28} {:>4} {:>8} {:>8} {:>8}", "source", "ch", "median", "std", "acf(1)");
    for (i, src) in Source::all().into_iter().enumerate() {
        let mut rng = seed::rng_for(42, "example", i as u64);
        let out = generate(src, &mut rng, 256, Frequency::HOURLY, &settings)?;
        let s = &out[0];
        println!(
            "{:<28} {:>4} {:>8.3} {:>8.3} {:>8.3}",
            src.name(),
            out.len(),
            stats::median(&s.values).unwrap_or(f64::NAN),
            stats::std_dev(&s.values),
            stats::autocorrelation(&s.values, 1)
        );
    }
    Ok(())
}
