//! Composite GP kernels: a fixed kernel's gram entries, then a random
//! kernel from the bank and a few sample paths.

use tsweave::gp::{gram, sample_composite_kernel, sample_gp_paths, unit_grid, BaseKernel, CompositeKernel, PeriodDistribution};
use tsweave::seed;
use tsweave::timeseries::Frequency;

fn main() -> tsweave::Result<()> {
    let k = CompositeKernel::sum(vec![
        CompositeKernel::leaf(BaseKernel::Rbf { lengthscale: 1.0 }),
        CompositeKernel::leaf(BaseKernel::White { variance: 0.1 }),
    ]);
    let g = gram(&k, &[0.0, 1.0, 2.0]);
    println!("RBF(1) + White(0.1) on [0, 1, 2]:");
    for r in g.chunks(3) {
        println!("  {:.5} {:.5} {:.5}", r[0], r[1], r[2]);
    }

    let mut rng = seed::rng(7);
    let kernel = sample_composite_kernel(&mut rng, &[1.0; 8], 4, 200, Frequency::HOURLY, &PeriodDistribution::default())?;
    println!("\nrandom kernel with {} leaves: {kernel:?}", kernel.leaf_count());
    let paths = sample_gp_paths(&kernel, &unit_grid(200), &mut rng, 1e-6, 3)?;
    for (i, p) in paths.iter().enumerate() {
        let head: Vec<String> = p.iter().take(6).map(|v| format!("{v:.3}")).collect();
        println!("path {i}: {} ...", head.join(" "));
    }
    Ok(())
}
