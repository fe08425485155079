//! Trains the toy forecaster on amplitude-modulated sines and scores it
//! against seasonal naive on held-out tasks.
//!
//! cargo run --release --example train_toy_sine -- [steps] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use tsweave::evaluation::evaluate;
use tsweave::model::{Model, ModelConfig};
use tsweave::toy::{sine_corpus, sine_tasks};
use tsweave::training::{loss_endpoints, train, NanAugConfig, TrainConfig, TrainSource, TrainerState};

fn main() -> tsweave::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let out: Option<PathBuf> = args.next().map(PathBuf::from);

    let cfg = TrainConfig {
        peak_lr: 1e-3,
        warmup_ratio: 0.05,
        iterations: steps,
        length_distribution: [(64, 1.0)].into_iter().collect(),
        horizon_range: (8, 24),
        cut_vs_subsample: 1.0,
        scaler_aug_prob: 0.0,
        nan_aug: NanAugConfig {
            prob: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let sources = [TrainSource::pool("sine", sine_corpus(7, 2000, 400)?)];
    let mut state = TrainerState::new(Model::new(ModelConfig::toy(64, 2, 2, 2), 1)?);
    let t = Instant::now();
    let report = train(&mut state, &sources, &cfg, 3, out.as_deref())?;
    let (first, _) = loss_endpoints(&report.trace, 10);
    let (_, last) = loss_endpoints(&report.trace, 100);
    println!("{steps} steps in {:.1?}: loss {first:.4} -> {last:.4} (ratio {:.3})", t.elapsed(), last / first);

    let r = evaluate(&state.model, &sine_tasks(11, 50, 48, 16)?)?;
    println!("held-out MASE {:.3} vs seasonal naive {:.3} (normalized {:.3})", r.aggregate.mase, r.baseline.mase, r.normalized.mase);
    println!("held-out CRPS {:.4} vs seasonal naive {:.4} (normalized {:.3})", r.aggregate.crps, r.baseline.crps, r.normalized.crps);
    Ok(())
}
