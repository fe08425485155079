//! Seasonal-naive scoring on held-out sine tasks, the CSV reports, and a
//! missing-value sweep.

use tsweave::evaluation::{curve_csv, evaluate, nan_robustness_curve, normalized_csv, report_csv, SeasonalNaive};
use tsweave::toy::sine_tasks;

fn main() -> tsweave::Result<()> {
    let tasks = sine_tasks(1, 8, 48, 12)?;
    let naive = SeasonalNaive {
        quantiles: vec![0.1, 0.5, 0.9],
    };
    let r = evaluate(&naive, &tasks)?;
    print!("{}", report_csv(&r));
    println!();
    print!("{}", normalized_csv(&[("sines".into(), r)]));
    println!();
    let curve = nan_robustness_curve(&naive, &tasks, &[0.0, 0.3, 0.6, 0.9], 1)?;
    print!("{}", curve_csv(&curve));
    Ok(())
}
