//! Noiseless amplitude-modulated sines for the end-to-end toy run.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::Result;
use crate::evaluation::EvalTask;
use crate::seed;
use crate::timeseries::{Frequency, TimeSeries};

/// `offset + amplitude (1 + depth sin(2 pi t / mod_period + mod_phase)) sin(2 pi t / period + phase)`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulatedSine {
    pub period: f64,
    pub mod_period: f64,
    pub depth: f64,
    pub phase: f64,
    pub mod_phase: f64,
    pub amplitude: f64,
    pub offset: f64,
}

impl ModulatedSine {
    /// Carrier period in `[6, 20)`, modulation 3 to 8 times slower.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let period = rng.random_range(6.0..20.0);
        Self {
            period,
            mod_period: period * rng.random_range(3.0..8.0),
            depth: rng.random_range(0.2..0.5),
            phase: rng.random_range(0.0..TAU),
            mod_phase: rng.random_range(0.0..TAU),
            amplitude: rng.random_range(0.5..2.0),
            offset: rng.random_range(-1.0..1.0),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let envelope = 1.0 + self.depth * (TAU * t / self.mod_period + self.mod_phase).sin();
        self.offset + self.amplitude * envelope * (TAU * t / self.period + self.phase).sin()
    }

    pub fn series(&self, len: usize) -> Result<TimeSeries> {
        TimeSeries::from_values((0..len).map(|t| self.value(t as f64)).collect(), Frequency::DAILY)
    }

    /// Nearest whole number of steps per carrier cycle.
    pub fn season(&self) -> usize {
        (self.period.round() as usize).max(1)
    }
}

pub fn sine_corpus(seed_value: u64, count: usize, len: usize) -> Result<Vec<TimeSeries>> {
    (0..count)
        .map(|i| {
            let mut rng = seed::rng_for(seed_value, "toy-sine", i as u64);
            Ok(ModulatedSine::random(&mut rng).series(len)?.with_id(format!("sine_{i}")))
        })
        .collect()
}

/// Held-out tasks with the season set to the rounded carrier period.
pub fn sine_tasks(seed_value: u64, count: usize, history: usize, horizon: usize) -> Result<Vec<EvalTask>> {
    (0..count)
        .map(|i| {
            let mut rng = seed::rng_for(seed_value, "toy-sine-task", i as u64);
            let s = ModulatedSine::random(&mut rng);
            let offset = rng.random_range(0..200) as f64;
            let values = (0..history + horizon).map(|t| s.value(t as f64 + offset)).collect();
            let series = TimeSeries::from_values(values, Frequency::DAILY)?.with_id(format!("task_{i}"));
            EvalTask::split(&series, horizon, s.season())
        })
        .collect()
}
