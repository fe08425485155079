//! Point and block missingness on a history.

use tsweave::augment::nan_inject;
use tsweave::seed;
use tsweave::timeseries::{Frequency, TimeSeries};

fn main() -> tsweave::Result<()> {
    let s = TimeSeries::from_values((0..60).map(|t| (t as f64 * 0.3).sin()).collect(), Frequency::HOURLY)?;
    for (point, block) in [(0.1, 0.0), (0.0, 0.05), (0.2, 0.02)] {
        let inj = nan_inject(&s, &mut seed::rng(5), point, block, 6.0, None)?;
        let row: String = inj.series.mask.iter().map(|m| if *m { '.' } else { 'x' }).collect();
        println!("point {point:.2} block {block:.2}  missing {:.2}  {row}", inj.missing_fraction);
    }
    Ok(())
}
