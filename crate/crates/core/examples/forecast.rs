//! Builds a small model, forecasts a series with gaps, and round-trips the
//! checkpoint. The model is untrained, so the numbers only show the shape
//! of the output.

use tsweave::model::checkpoint::{load_checkpoint, save_checkpoint};
use tsweave::model::{parameter_count, Model, ModelConfig};
use tsweave::timeseries::{default_start, Frequency, TimeSeries};

fn main() -> tsweave::Result<()> {
    println!("default config: {} parameters", parameter_count(&ModelConfig::default()));
    let cfg = ModelConfig::toy(32, 2, 2, 2);
    let model = Model::new(cfg.clone(), 1)?;
    println!("toy config: {} parameters", parameter_count(&cfg));

    let values: Vec<f64> = (0..48).map(|t| 10.0 + (t as f64 * 0.5).sin()).collect();
    let mask: Vec<bool> = (0..48).map(|t| t % 7 != 3).collect();
    let history = TimeSeries::with_mask(values, mask, default_start(), Frequency::HOURLY)?;
    let f = model.predict(&history, 6)?;
    println!("\nstep  {}", f.quantiles.iter().map(|q| format!("{q:>7}")).collect::<String>());
    for (h, row) in f.values.iter().enumerate() {
        println!("{:>4}  {}", h + 1, row.iter().map(|v| format!("{v:>7.3}")).collect::<String>());
    }
    println!("rows repaired for crossing: {}", f.crossings_repaired);

    let dir = std::env::temp_dir().join("tsweave-forecast-example");
    std::fs::create_dir_all(&dir).map_err(|e| tsweave::Error::InvalidInput(e.to_string()))?;
    let path = dir.join("model.bin");
    save_checkpoint(&model, &path)?;
    let back = load_checkpoint(&path)?;
    let again = back.predict(&history, 6)?;
    let diff = again
        .values
        .iter()
        .flatten()
        .zip(f.values.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    // Checkpoints hold f32 weights.
    println!("max forecast change after an f32 checkpoint round trip: {diff:.2e}");
    Ok(())
}
