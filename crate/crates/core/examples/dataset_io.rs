//! Writes a dataset in both formats and reads it back.

use tsweave::timeseries::{read_dataset, write_dataset, DatasetFormat};
use tsweave::toy::sine_corpus;

fn main() -> tsweave::Result<()> {
    let series = sine_corpus(3, 4, 32)?;
    let dir = std::env::temp_dir().join("tsweave-dataset-example");
    std::fs::create_dir_all(&dir).map_err(|e| tsweave::Error::InvalidInput(e.to_string()))?;
    for (format, name) in [(DatasetFormat::Jsonl, "d.jsonl"), (DatasetFormat::Bin, "d.bin")] {
        let p = dir.join(name);
        write_dataset(&series, &p, format)?;
        let back = read_dataset(&p)?;
        let bytes = std::fs::metadata(&p).map(|m| m.len()).unwrap_or(0);
        let err = series
            .iter()
            .zip(&back)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        println!("{name}: {} series, {bytes} bytes, max abs difference after reload {err:.2e}", back.len());
    }
    Ok(())
}
