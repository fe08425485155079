//! Audio-style procedural generators rendered as discrete-time DSP on an
//! oversampled grid and decimated by block averaging.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::sampling::{log_uniform, standard_normal, uniform};
use crate::timeseries::{Frequency, TimeSeries};

pub const OVERSAMPLE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AudioKind {
    StochasticRhythm,
    FinancialVolatility,
    NetworkTopology,
    MultiScaleFractal,
}

/// Averages consecutive blocks of `OVERSAMPLE` samples.
pub fn decimate(internal: &[f64]) -> Vec<f64> {
    internal
        .chunks(OVERSAMPLE)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

fn brown<R: Rng + ?Sized>(rng: &mut R, n: usize, step_sd: f64) -> Vec<f64> {
    let mut acc = 0.0;
    (0..n)
        .map(|_| {
            acc += step_sd * standard_normal(rng);
            acc
        })
        .collect()
}

// ------------------------------------------------------------------ rhythm

#[derive(Clone, Debug, PartialEq)]
pub struct RhythmLayer {
    /// Onset times in output steps.
    pub onsets: Vec<usize>,
    pub amplitude: f64,
    /// Envelope time constant in output steps.
    pub decay: f64,
    /// Carrier period in output steps.
    pub carrier_period: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhythmParams {
    pub tempo: usize,
    pub layers: Vec<RhythmLayer>,
}

fn layer_onsets<R: Rng + ?Sized>(rng: &mut R, length: usize, interval: usize, hit_prob: f64) -> Vec<usize> {
    (0..length)
        .step_by(interval.max(1))
        .filter(|_| hit_prob >= 1.0 || rng.random::<f64>() < hit_prob)
        .collect()
}

/// Base layer hits every beat; `extra_layers` subdivide the beat by 2-4
/// with random hit probability.
pub fn sample_rhythm<R: Rng + ?Sized>(rng: &mut R, length: usize, extra_layers: usize) -> RhythmParams {
    let lo = (length / 64).max(4);
    let hi = (length / 8).max(lo + 1);
    let tempo = rng.random_range(lo..=hi);
    let mut layers = Vec::with_capacity(extra_layers + 1);
    let layer = |rng: &mut R, interval: usize, hit: f64| RhythmLayer {
        onsets: layer_onsets(rng, length, interval, hit),
        amplitude: uniform(rng, 0.3, 1.0),
        decay: uniform(rng, 0.5, (interval as f64 / 2.0).max(0.6)),
        carrier_period: uniform(rng, 2.0, 6.0),
    };
    layers.push(layer(rng, tempo, 1.0));
    for _ in 0..extra_layers {
        let k = rng.random_range(2..=4);
        let hit = uniform(rng, 0.3, 0.9);
        layers.push(layer(rng, (tempo / k).max(1), hit));
    }
    RhythmParams { tempo, layers }
}

fn rhythm_internal(p: &RhythmParams, length: usize, carrier: bool) -> Vec<f64> {
    let n = length * OVERSAMPLE;
    let mut out = vec![0.0; n];
    let os = OVERSAMPLE as f64;
    for layer in &p.layers {
        let tau = layer.decay * os;
        let span = (10.0 * tau).ceil() as usize;
        for &o in &layer.onsets {
            let n0 = o * OVERSAMPLE;
            for (k, slot) in out.iter_mut().enumerate().skip(n0).take(span) {
                let d = (k - n0) as f64;
                let env = layer.amplitude * (-d / tau).exp();
                *slot += if carrier {
                    env * (2.0 * PI * d / (layer.carrier_period * os)).sin()
                } else {
                    env
                };
            }
        }
    }
    out
}

pub fn render_rhythm(p: &RhythmParams, length: usize) -> Vec<f64> {
    decimate(&rhythm_internal(p, length, true))
}

/// Summed amplitude envelopes without carriers, at output resolution.
pub fn rhythm_envelope(p: &RhythmParams, length: usize) -> Vec<f64> {
    decimate(&rhythm_internal(p, length, false))
}

// -------------------------------------------------------------- volatility

#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub onset: usize,
    pub magnitude: f64,
    pub decay: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolatilityParams {
    pub lfo_amplitude: f64,
    pub lfo_period: f64,
    /// Brownian increment standard deviation per output step.
    pub noise_level: f64,
    pub am_depth: f64,
    pub am_period: f64,
    pub jump_rate: f64,
    pub jumps: Vec<Jump>,
}

pub fn sample_volatility<R: Rng + ?Sized>(rng: &mut R, length: usize) -> Result<VolatilityParams> {
    let l = length as f64;
    let jump_rate = log_uniform(rng, 1e-3, 2e-2);
    let count = Poisson::new(jump_rate * l)
        .map_err(|e| Error::InvalidInput(format!("jump rate: {e}")))?
        .sample(rng) as usize;
    let jumps = (0..count)
        .map(|_| Jump {
            onset: rng.random_range(0..length),
            magnitude: if rng.random::<bool>() { 1.0 } else { -1.0 } * uniform(rng, 1.0, 5.0),
            decay: uniform(rng, 2.0, (l / 10.0).max(3.0)),
        })
        .collect();
    Ok(VolatilityParams {
        lfo_amplitude: uniform(rng, 0.0, 2.0),
        lfo_period: uniform(rng, l / 2.0, 2.0 * l),
        noise_level: uniform(rng, 0.05, 0.3),
        am_depth: uniform(rng, 0.0, 0.9),
        am_period: uniform(rng, l / 8.0, l),
        jump_rate,
        jumps,
    })
}

pub fn render_volatility<R: Rng + ?Sized>(p: &VolatilityParams, length: usize, rng: &mut R) -> Vec<f64> {
    let n = length * OVERSAMPLE;
    let os = OVERSAMPLE as f64;
    let step = p.noise_level / os.sqrt();
    let mut acc = 0.0;
    let mut out: Vec<f64> = (0..n)
        .map(|k| {
            let kf = k as f64;
            let am = 1.0 + p.am_depth * (2.0 * PI * kf / (p.am_period * os)).sin();
            acc += step * am * standard_normal(rng);
            p.lfo_amplitude * (2.0 * PI * kf / (p.lfo_period * os)).sin() + acc
        })
        .collect();
    for j in &p.jumps {
        let n0 = j.onset * OVERSAMPLE;
        for (k, v) in out.iter_mut().enumerate().skip(n0) {
            *v += j.magnitude * (-((k - n0) as f64) / (j.decay * os)).exp();
        }
    }
    decimate(&out)
}

// ---------------------------------------------------------------- network

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub lfo_amplitude: f64,
    pub lfo_period: f64,
    pub lfo_phase: f64,
    pub burst_level: f64,
    pub gate_period: f64,
    pub gate_duty: f64,
    pub dip_depth: f64,
    pub dip_period: usize,
    pub dip_decay: f64,
    pub overhead_amplitude: f64,
    pub overhead_period: f64,
    pub spikes: Vec<(usize, f64)>,
}

pub fn sample_network<R: Rng + ?Sized>(rng: &mut R, length: usize) -> NetworkParams {
    let l = length as f64;
    let spike_count = rng.random_range(0..=(length / 100).max(1));
    NetworkParams {
        lfo_amplitude: uniform(rng, 0.5, 2.0),
        lfo_period: uniform(rng, l / 4.0, 2.0 * l),
        lfo_phase: uniform(rng, 0.0, 2.0 * PI),
        burst_level: uniform(rng, 0.1, 0.8),
        gate_period: uniform(rng, 8.0, (l / 4.0).max(9.0)),
        gate_duty: uniform(rng, 0.1, 0.5),
        dip_depth: uniform(rng, 0.2, 1.5),
        dip_period: rng.random_range(8..=(length / 4).max(9)),
        dip_decay: uniform(rng, 1.0, 6.0),
        overhead_amplitude: uniform(rng, 0.02, 0.2),
        overhead_period: uniform(rng, 2.0, 4.0),
        spikes: (0..spike_count)
            .map(|_| (rng.random_range(0..length), uniform(rng, 3.0, 8.0)))
            .collect(),
    }
}

pub fn render_network<R: Rng + ?Sized>(p: &NetworkParams, length: usize, rng: &mut R) -> Vec<f64> {
    let os = OVERSAMPLE as f64;
    let n = length * OVERSAMPLE;
    let mut out: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 / os;
            let lfo = p.lfo_amplitude * (2.0 * PI * t / p.lfo_period + p.lfo_phase).sin();
            let gate = if (t % p.gate_period) < p.gate_duty * p.gate_period {
                1.0
            } else {
                0.0
            };
            let burst = p.burst_level * gate * standard_normal(rng);
            let since = t % p.dip_period as f64;
            let dip = -p.dip_depth * (-since / p.dip_decay).exp();
            let over = p.overhead_amplitude * (2.0 * PI * t / p.overhead_period).sin();
            lfo + burst + dip + over
        })
        .collect();
    for &(t, m) in &p.spikes {
        for v in out.iter_mut().skip(t * OVERSAMPLE).take(OVERSAMPLE) {
            *v += m;
        }
    }
    decimate(&out)
}

// ---------------------------------------------------------------- fractal

/// RBJ band-pass biquad (0 dB peak gain); `freq` in cycles per sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPass {
    pub freq: f64,
    pub q: f64,
}

impl BandPass {
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let w0 = 2.0 * PI * self.freq;
        let alpha = w0.sin() / (2.0 * self.q);
        let a0 = 1.0 + alpha;
        let (b0, b2) = (alpha / a0, -alpha / a0);
        let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = b0 * x0 + b2 * x2 - a1 * y1 - a2 * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FractalParams {
    /// Center frequencies in cycles per output step with their gains.
    pub bands: Vec<(f64, f64)>,
    pub q: f64,
}

pub fn sample_fractal<R: Rng + ?Sized>(rng: &mut R, length: usize) -> FractalParams {
    let count = rng.random_range(3..=6);
    let lo = (4.0 / length as f64).min(0.05);
    let hi = 0.25;
    let atten = uniform(rng, 0.5, 0.85);
    let bands = (0..count)
        .map(|i| {
            let f = lo * (hi / lo).powf(i as f64 / (count - 1) as f64);
            (f, atten.powi(i as i32))
        })
        .collect();
    FractalParams {
        bands,
        q: uniform(rng, 2.0, 5.0),
    }
}

pub fn render_fractal<R: Rng + ?Sized>(p: &FractalParams, length: usize, rng: &mut R) -> Vec<f64> {
    let n = length * OVERSAMPLE;
    let noise = brown(rng, n, 1.0);
    let mut out = vec![0.0; n];
    for &(f, g) in &p.bands {
        let bp = BandPass {
            freq: f / OVERSAMPLE as f64,
            q: p.q,
        };
        for (o, v) in out.iter_mut().zip(bp.filter(&noise)) {
            *o += g * v;
        }
    }
    decimate(&out)
}

pub fn gen_audio<R: Rng + ?Sized>(kind: AudioKind, rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    if length < 32 {
        return Err(Error::InvalidInput(format!("audio generators need length >= 32, got {length}")));
    }
    let (values, prov) = match kind {
        AudioKind::StochasticRhythm => {
            let extra = rng.random_range(2..=4);
            let p = sample_rhythm(rng, length, extra);
            (render_rhythm(&p, length), format!("audio_stochastic_rhythm(tempo={},layers={})", p.tempo, p.layers.len()))
        }
        AudioKind::FinancialVolatility => {
            let p = sample_volatility(rng, length)?;
            (
                render_volatility(&p, length, rng),
                format!("audio_financial_volatility(jumps={})", p.jumps.len()),
            )
        }
        AudioKind::NetworkTopology => {
            let p = sample_network(rng, length);
            (render_network(&p, length, rng), "audio_network_topology".to_string())
        }
        AudioKind::MultiScaleFractal => {
            let p = sample_fractal(rng, length);
            (
                render_fractal(&p, length, rng),
                format!("audio_multi_scale_fractal(bands={})", p.bands.len()),
            )
        }
    };
    Ok(TimeSeries::from_values(values, freq)?.with_provenance(prov))
}
