//! Regime-switching Ornstein-Uhlenbeck paths and fractional Brownian noise.

use tsweave::sde::{fbm_increments, sample_ou_config, simulate_ou, simulate_regime_chain, OUConfig, OUPriors};
use tsweave::seed;
use tsweave::stats;

fn main() -> tsweave::Result<()> {
    let mut rng = seed::rng(3);

    let cfg = OUConfig::constant(2.0, 1.0, 0.5, 0.01, 50_000);
    let s = simulate_ou(&cfg, &mut rng)?;
    println!(
        "constant OU: mean {:.4} (1.0), variance {:.4} (sigma^2 / 2 theta = 0.0625)",
        stats::mean(&s.values),
        stats::variance(&s.values)
    );

    let chain = simulate_regime_chain(&mut rng, 100_000, 0.95, 0.8);
    let stays = |r: u8| {
        let (mut n, mut k) = (0, 0);
        for w in chain.windows(2).filter(|w| w[0] == r) {
            n += 1;
            k += (w[1] == r) as usize;
        }
        k as f64 / n as f64
    };
    println!("regime chain: stay(0) {:.3} (0.95), stay(1) {:.3} (0.80)", stays(0), stays(1));

    for h in [0.3, 0.5, 0.7] {
        let inc = fbm_increments(&mut rng, 20_000, h, 1.0)?;
        println!("fBm H={h}: lag-1 increment correlation {:.3}", stats::autocorrelation(&inc, 1));
    }

    let random = sample_ou_config(&mut rng, 512, &OUPriors::default())?;
    println!("\nsampled prior draw: {}", random.describe());
    Ok(())
}
