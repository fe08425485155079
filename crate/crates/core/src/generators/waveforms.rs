//! Deterministic-shape generators: sawtooth, step, anomaly, spikes, sine.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling::{log_uniform, standard_normal, uniform, weighted_index};
use crate::timeseries::{Frequency, TimeSeries};

fn need(length: usize, min: usize, what: &str) -> Result<()> {
    if length < min {
        Err(Error::InvalidInput(format!("{what} needs length >= {min}, got {length}")))
    } else {
        Ok(())
    }
}

fn series(values: Vec<f64>, freq: Frequency, prov: String) -> Result<TimeSeries> {
    Ok(TimeSeries::from_values(values, freq)?.with_provenance(prov))
}

// ---------------------------------------------------------------- sawtooth

#[derive(Clone, Debug, PartialEq)]
pub struct SawtoothParams {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub upward: bool,
    pub trend_slope: f64,
    pub season_amplitude: f64,
    pub season_period: f64,
}

pub fn render_sawtooth(p: &SawtoothParams, length: usize) -> Vec<f64> {
    (0..length)
        .map(|i| {
            let t = i as f64;
            let x = t / p.period + p.phase;
            let ramp = p.amplitude * (x - x.floor());
            let base = if p.upward { ramp } else { p.amplitude - ramp };
            base + p.trend_slope * t + p.season_amplitude * (2.0 * PI * t / p.season_period).sin()
        })
        .collect()
}

pub fn sample_sawtooth<R: Rng + ?Sized>(rng: &mut R, length: usize) -> SawtoothParams {
    let l = length as f64;
    let amplitude = uniform(rng, 0.5, 5.0);
    SawtoothParams {
        amplitude,
        period: uniform(rng, 2f64.max(l / 20.0), 2f64.max(l / 2.0)),
        phase: rng.random::<f64>(),
        upward: rng.random::<bool>(),
        trend_slope: uniform(rng, -0.1, 0.1) * amplitude / l,
        season_amplitude: uniform(rng, 0.0, 0.1) * amplitude,
        season_period: uniform(rng, 4.0, 4f64.max(l / 4.0)),
    }
}

pub fn gen_sawtooth<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    need(length, 2, "sawtooth")?;
    let p = sample_sawtooth(rng, length);
    let prov = format!(
        "sawtooth(period={:.2},{})",
        p.period,
        if p.upward { "up" } else { "down" }
    );
    series(render_sawtooth(&p, length), freq, prov)
}

// -------------------------------------------------------------------- step

#[derive(Clone, Debug, PartialEq)]
pub enum StepPattern {
    Stable,
    Trend { slope: f64 },
    Spike { offset: usize, magnitude: f64 },
    Oscillation { amplitude: f64, period: f64 },
    RandomWalk { increments: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSegment {
    pub start: usize,
    pub level: f64,
    pub pattern: StepPattern,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepParams {
    /// Sorted by `start`; the first segment starts at 0.
    pub segments: Vec<StepSegment>,
    pub smoothing_sigma: Option<f64>,
    pub noise: Vec<f64>,
    pub season_amplitude: f64,
    pub season_period: f64,
    pub trend_slope: f64,
    pub anomalies: Vec<(usize, f64)>,
}

impl StepParams {
    pub fn flat(level: f64) -> Self {
        Self {
            segments: vec![StepSegment {
                start: 0,
                level,
                pattern: StepPattern::Stable,
            }],
            smoothing_sigma: None,
            noise: Vec::new(),
            season_amplitude: 0.0,
            season_period: 1.0,
            trend_slope: 0.0,
            anomalies: Vec::new(),
        }
    }
}

/// Gaussian smoothing with edge replication.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || values.is_empty() {
        return values.to_vec();
    }
    let half = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-half..=half).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect();
    let norm: f64 = w.iter().sum();
    let n = values.len() as i64;
    (0..n)
        .map(|i| {
            (-half..=half)
                .zip(&w)
                .map(|(k, wk)| wk * values[(i + k).clamp(0, n - 1) as usize])
                .sum::<f64>()
                / norm
        })
        .collect()
}

pub fn render_step(p: &StepParams, length: usize) -> Vec<f64> {
    let mut y = vec![0.0; length];
    for (si, seg) in p.segments.iter().enumerate() {
        let end = p.segments.get(si + 1).map_or(length, |s| s.start).min(length);
        let mut walk = 0.0;
        for (j, t) in (seg.start..end).enumerate() {
            let extra = match &seg.pattern {
                StepPattern::Stable => 0.0,
                StepPattern::Trend { slope } => slope * j as f64,
                StepPattern::Spike { offset, magnitude } => {
                    if j == *offset {
                        *magnitude
                    } else {
                        0.0
                    }
                }
                StepPattern::Oscillation { amplitude, period } => amplitude * (2.0 * PI * j as f64 / period).sin(),
                StepPattern::RandomWalk { increments } => {
                    if j > 0 {
                        walk += increments.get(j - 1).copied().unwrap_or(0.0);
                    }
                    walk
                }
            };
            y[t] = seg.level + extra;
        }
    }
    if let Some(s) = p.smoothing_sigma {
        y = gaussian_smooth(&y, s);
    }
    for (t, v) in y.iter_mut().enumerate() {
        let tf = t as f64;
        *v += p.trend_slope * tf + p.season_amplitude * (2.0 * PI * tf / p.season_period).sin();
        if let Some(n) = p.noise.get(t) {
            *v += n;
        }
    }
    for &(t, m) in &p.anomalies {
        if t < length {
            y[t] += m;
        }
    }
    y
}

/// Segment starts for `changepoints` breaks with a minimum gap of 2.
fn changepoint_starts<R: Rng + ?Sized>(rng: &mut R, length: usize, changepoints: usize) -> Vec<usize> {
    let k = changepoints.min(length / 2 - 1);
    let slots: Vec<usize> = (1..length / 2).collect();
    let mut picked = Vec::with_capacity(k);
    let mut pool = slots;
    for _ in 0..k {
        let i = rng.random_range(0..pool.len());
        picked.push(pool.swap_remove(i) * 2);
    }
    picked.sort_unstable();
    let mut starts = vec![0];
    starts.extend(picked);
    starts
}

/// Piecewise-constant draw with exactly `changepoints` level jumps of size
/// at least 0.5, stable segments only and no extras.
pub fn sample_step_plain<R: Rng + ?Sized>(rng: &mut R, length: usize, changepoints: usize) -> StepParams {
    let mut p = StepParams::flat(uniform(rng, -1.0, 1.0));
    let starts = changepoint_starts(rng, length, changepoints);
    let mut level = p.segments[0].level;
    for &s in &starts[1..] {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        level += sign * uniform(rng, 0.5, 3.0);
        p.segments.push(StepSegment {
            start: s,
            level,
            pattern: StepPattern::Stable,
        });
    }
    p
}

pub fn sample_step<R: Rng + ?Sized>(rng: &mut R, length: usize) -> StepParams {
    let k = rng.random_range(1..=8usize);
    let mut p = sample_step_plain(rng, length, k);
    let ends: Vec<usize> = p
        .segments
        .iter()
        .enumerate()
        .map(|(i, _)| p.segments.get(i + 1).map_or(length, |s| s.start))
        .collect();
    for (seg, end) in p.segments.iter_mut().zip(ends) {
        let len = end - seg.start;
        seg.pattern = match weighted_index(rng, &[0.4, 0.15, 0.15, 0.15, 0.15]) {
            0 => StepPattern::Stable,
            1 => StepPattern::Trend {
                slope: uniform(rng, -0.5, 0.5) / len as f64,
            },
            2 => StepPattern::Spike {
                offset: rng.random_range(0..len),
                magnitude: uniform(rng, -3.0, 3.0),
            },
            3 => StepPattern::Oscillation {
                amplitude: uniform(rng, 0.05, 0.3),
                period: uniform(rng, 2.0, 2f64.max(len as f64)),
            },
            _ => StepPattern::RandomWalk {
                increments: (0..len).map(|_| 0.05 * standard_normal(rng)).collect(),
            },
        };
    }
    if rng.random::<f64>() < 0.5 {
        p.smoothing_sigma = Some(uniform(rng, 0.5, 4.0));
    }
    if rng.random::<f64>() < 0.5 {
        let s = uniform(rng, 0.0, 0.1);
        p.noise = (0..length).map(|_| s * standard_normal(rng)).collect();
    }
    if rng.random::<f64>() < 0.3 {
        p.season_amplitude = uniform(rng, 0.0, 0.3);
        p.season_period = uniform(rng, 4.0, 4f64.max(length as f64 / 4.0));
    }
    if rng.random::<f64>() < 0.3 {
        p.trend_slope = uniform(rng, -1.0, 1.0) / length as f64;
    }
    if rng.random::<f64>() < 0.2 {
        for _ in 0..rng.random_range(1..=3) {
            p.anomalies.push((rng.random_range(0..length), uniform(rng, -4.0, 4.0)));
        }
    }
    p
}

pub fn gen_step<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    need(length, 8, "step")?;
    let p = sample_step(rng, length);
    let prov = format!(
        "step(segments={},smooth={})",
        p.segments.len(),
        p.smoothing_sigma.is_some()
    );
    series(render_step(&p, length), freq, prov)
}

// ----------------------------------------------------------------- anomaly

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MagnitudeRegime {
    Constant,
    Trending,
    Cyclical,
    CorrelatedRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimingPattern {
    Single,
    Clustered,
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyParams {
    pub baseline: f64,
    /// +1 or -1 for every spike of the series.
    pub sign: f64,
    pub positions: Vec<usize>,
    /// Nonnegative, one per position.
    pub magnitudes: Vec<f64>,
}

pub fn render_anomaly(p: &AnomalyParams, length: usize) -> Vec<f64> {
    let mut y = vec![p.baseline; length];
    for (&t, m) in p.positions.iter().zip(&p.magnitudes) {
        if t < length {
            y[t] = p.baseline + p.sign * m;
        }
    }
    y
}

/// Positions for a timing pattern: a base period with per-gap variance
/// and jitter; clustered mode emits 2-4 spikes around each center.
pub fn anomaly_positions<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    pattern: TimingPattern,
    period: f64,
    period_var: f64,
    jitter: usize,
) -> Vec<usize> {
    let mut out = Vec::new();
    let mut c = uniform(rng, 0.0, period);
    while (c as usize) < length {
        let clustered = match pattern {
            TimingPattern::Single => false,
            TimingPattern::Clustered => true,
            TimingPattern::Mixed => rng.random::<bool>(),
        };
        let j = jitter as i64;
        let centre = c.round() as i64 + if j > 0 { rng.random_range(-j..=j) } else { 0 };
        if clustered {
            for k in 0..rng.random_range(2..=4) {
                out.push(centre + 2 * k);
            }
        } else {
            out.push(centre);
        }
        c += (period * (1.0 + period_var * uniform(rng, -1.0, 1.0))).max(1.0);
    }
    let mut pos: Vec<usize> = out
        .into_iter()
        .filter(|p| *p >= 0 && (*p as usize) < length)
        .map(|p| p as usize)
        .collect();
    pos.sort_unstable();
    pos.dedup();
    pos
}

pub fn anomaly_magnitudes<R: Rng + ?Sized>(rng: &mut R, count: usize, regime: MagnitudeRegime, base: f64) -> Vec<f64> {
    let n = count.max(1) as f64;
    let mut ar = 0.0;
    (0..count)
        .map(|i| {
            let u = i as f64 / n;
            let m = match regime {
                MagnitudeRegime::Constant => base,
                MagnitudeRegime::Trending => base * (0.5 + u),
                MagnitudeRegime::Cyclical => base * (1.0 + 0.5 * (2.0 * PI * u * 2.0).sin()),
                MagnitudeRegime::CorrelatedRandom => {
                    ar = 0.8 * ar + 0.6 * standard_normal(rng);
                    base * (1.0 + 0.4 * ar)
                }
            };
            m.max(0.0)
        })
        .collect()
}

pub fn gen_anomaly<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    need(length, 8, "anomaly")?;
    let pattern = [TimingPattern::Single, TimingPattern::Clustered, TimingPattern::Mixed][rng.random_range(0..3)];
    let regime = [
        MagnitudeRegime::Constant,
        MagnitudeRegime::Trending,
        MagnitudeRegime::Cyclical,
        MagnitudeRegime::CorrelatedRandom,
    ][rng.random_range(0..4)];
    let period = uniform(rng, 8f64.min(length as f64 / 2.0), (length as f64 / 3.0).max(8.0));
    let period_var = uniform(rng, 0.0, 0.3);
    let jitter = rng.random_range(0..=2);
    let positions = anomaly_positions(rng, length, pattern, period, period_var, jitter);
    let base = uniform(rng, 1.0, 5.0);
    let magnitudes = anomaly_magnitudes(rng, positions.len(), regime, base);
    let p = AnomalyParams {
        baseline: uniform(rng, -1.0, 1.0),
        sign: if rng.random::<bool>() { 1.0 } else { -1.0 },
        positions,
        magnitudes,
    };
    let prov = format!("anomaly({pattern:?},{regime:?},n={})", p.positions.len());
    series(render_anomaly(&p, length), freq, prov)
}

// ------------------------------------------------------------------ spikes

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpikeShape {
    /// Triangular dip.
    V { half_width: usize },
    /// Triangular peak.
    InvertedV { half_width: usize },
    /// `width` equal extreme values flanked by linear ramps.
    Plateau { width: usize, ramp: usize },
}

impl SpikeShape {
    /// Offsets from the spike start with their profile in `(0, 1]`.
    pub fn profile(self) -> Vec<f64> {
        match self {
            SpikeShape::V { half_width } | SpikeShape::InvertedV { half_width } => {
                let h = half_width as f64 + 1.0;
                (0..=2 * half_width)
                    .map(|i| 1.0 - (i as f64 - half_width as f64).abs() / h)
                    .collect()
            }
            SpikeShape::Plateau { width, ramp } => {
                let r = ramp as f64 + 1.0;
                let up = (1..=ramp).map(|i| i as f64 / r);
                let mut v: Vec<f64> = up.clone().collect();
                v.extend(std::iter::repeat_n(1.0, width));
                v.extend(up.rev());
                v
            }
        }
    }

    fn direction(self) -> f64 {
        match self {
            SpikeShape::V { .. } => -1.0,
            _ => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpikeMode {
    Burst,
    Spread,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpikesParams {
    pub baseline: f64,
    pub amplitude: f64,
    /// Multiplies the shape direction; plateaus may point either way.
    pub sign: f64,
    pub shape: SpikeShape,
    pub centers: Vec<usize>,
    pub noise: Vec<f64>,
}

/// Evenly spread centers with edge margin `margin`.
pub fn spread_centers(length: usize, count: usize, margin: usize) -> Vec<usize> {
    let eff = length.saturating_sub(2 * margin) as f64;
    (0..count)
        .map(|i| (margin as f64 + (i as f64 + 0.5) * eff / count as f64).round() as usize)
        .collect()
}

pub fn burst_centers<R: Rng + ?Sized>(rng: &mut R, length: usize, count: usize, margin: usize) -> Vec<usize> {
    let span = (count * 4).min(length.saturating_sub(2 * margin)).max(1);
    let lo = margin;
    let hi = length.saturating_sub(margin + span).max(lo);
    let start = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut c: Vec<usize> = (0..count).map(|_| start + rng.random_range(0..span)).collect();
    c.sort_unstable();
    c.dedup();
    c
}

pub fn render_spikes(p: &SpikesParams, length: usize) -> Vec<f64> {
    let mut y = vec![p.baseline; length];
    let prof = p.shape.profile();
    let half = prof.len() / 2;
    let dir = p.sign * p.shape.direction();
    let mut delta = vec![0.0f64; length];
    for &c in &p.centers {
        for (i, w) in prof.iter().enumerate() {
            let t = c as i64 + i as i64 - half as i64;
            if t >= 0 && (t as usize) < length {
                let d = &mut delta[t as usize];
                if w.abs() > d.abs() {
                    *d = *w;
                }
            }
        }
    }
    for t in 0..length {
        y[t] += dir * p.amplitude * delta[t];
        if let Some(n) = p.noise.get(t) {
            y[t] += n;
        }
    }
    y
}

/// Brown (integrated white) or pink (Voss-McCartney, 8 rows) noise scaled
/// to unit standard deviation.
pub fn colored_noise<R: Rng + ?Sized>(rng: &mut R, length: usize, brown: bool) -> Vec<f64> {
    let raw: Vec<f64> = if brown {
        let mut acc = 0.0;
        (0..length)
            .map(|_| {
                acc += standard_normal(rng);
                acc
            })
            .collect()
    } else {
        let mut rows = [0.0f64; 8];
        for r in rows.iter_mut() {
            *r = standard_normal(rng);
        }
        (0..length)
            .map(|i| {
                let tz = (i as u64 + 1).trailing_zeros().min(7) as usize;
                rows[tz] = standard_normal(rng);
                rows.iter().sum::<f64>() + standard_normal(rng)
            })
            .collect()
    };
    let m = crate::stats::mean(&raw);
    let sd = crate::stats::std_dev(&raw).max(1e-12);
    raw.iter().map(|v| (v - m) / sd).collect()
}

pub fn gen_spikes<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    gen_spikes_with(rng, length, freq, 0.5)
}

pub fn gen_spikes_with<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    freq: Frequency,
    noise_prob: f64,
) -> Result<TimeSeries> {
    need(length, 8, "spikes")?;
    let hw_max = (length / 32).clamp(1, 8);
    let shape = match rng.random_range(0..3) {
        0 => SpikeShape::V {
            half_width: rng.random_range(1..=hw_max),
        },
        1 => SpikeShape::InvertedV {
            half_width: rng.random_range(1..=hw_max),
        },
        _ => SpikeShape::Plateau {
            width: rng.random_range(1..=hw_max),
            ramp: rng.random_range(1..=hw_max),
        },
    };
    let mode = if rng.random::<bool>() { SpikeMode::Burst } else { SpikeMode::Spread };
    let margin = shape.profile().len();
    let count = rng.random_range(1..=(length / (4 * margin)).clamp(1, 12));
    let centers = match mode {
        SpikeMode::Spread => spread_centers(length, count, margin),
        SpikeMode::Burst => burst_centers(rng, length, count, margin),
    };
    let sign = if matches!(shape, SpikeShape::Plateau { .. }) && rng.random::<bool>() {
        -1.0
    } else {
        1.0
    };
    let noise = if rng.random::<f64>() < noise_prob {
        let level = uniform(rng, 0.02, 0.1);
        let brown = rng.random::<bool>();
        colored_noise(rng, length, brown)
            .into_iter()
            .map(|v| v * level)
            .collect()
    } else {
        Vec::new()
    };
    let p = SpikesParams {
        baseline: uniform(rng, -1.0, 1.0),
        amplitude: uniform(rng, 1.0, 5.0),
        sign,
        shape,
        centers,
        noise,
    };
    let prov = format!("spikes({mode:?},{shape:?},n={})", p.centers.len());
    series(render_spikes(&p, length), freq, prov)
}

// -------------------------------------------------------------------- sine

#[derive(Clone, Debug, PartialEq)]
pub struct SineComponent {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub am_depth: f64,
    pub am_period: f64,
    pub fm_depth: f64,
    pub fm_period: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SineParams {
    pub components: Vec<SineComponent>,
    pub trend_slope: f64,
    pub trend_intercept: f64,
    pub noise: Vec<f64>,
}

/// `sum_i A_i(t) sin(phi_i(t)) + a t + b + eps_t`, phase accumulated from
/// the instantaneous frequency.
pub fn render_sine(p: &SineParams, length: usize) -> Vec<f64> {
    let mut y: Vec<f64> = (0..length)
        .map(|t| p.trend_slope * t as f64 + p.trend_intercept + p.noise.get(t).copied().unwrap_or(0.0))
        .collect();
    for c in &p.components {
        let mut phase = c.phase;
        for (t, v) in y.iter_mut().enumerate() {
            let tf = t as f64;
            let amp = c.amplitude * (1.0 + c.am_depth * (2.0 * PI * tf / c.am_period).sin());
            *v += amp * phase.sin();
            let f = (1.0 + c.fm_depth * (2.0 * PI * tf / c.fm_period).sin()) / c.period;
            phase += 2.0 * PI * f;
        }
    }
    y
}

pub fn sample_sine<R: Rng + ?Sized>(rng: &mut R, length: usize) -> SineParams {
    let l = length as f64;
    let n = rng.random_range(1..=3);
    let components: Vec<SineComponent> = (0..n)
        .map(|_| SineComponent {
            amplitude: uniform(rng, 0.2, 2.0),
            period: log_uniform(rng, 2.5, (l / 2.0).max(3.0)),
            phase: uniform(rng, 0.0, 2.0 * PI),
            am_depth: if rng.random::<bool>() { uniform(rng, 0.0, 0.5) } else { 0.0 },
            am_period: uniform(rng, l / 2.0, 2.0 * l),
            fm_depth: if rng.random::<bool>() { uniform(rng, 0.0, 0.3) } else { 0.0 },
            fm_period: uniform(rng, l / 2.0, 2.0 * l),
        })
        .collect();
    let total: f64 = components.iter().map(|c| c.amplitude).sum();
    let sd = uniform(rng, 0.0, 0.1) * total;
    SineParams {
        components,
        trend_slope: uniform(rng, -1.0, 1.0) * total / l,
        trend_intercept: uniform(rng, -1.0, 1.0),
        noise: (0..length).map(|_| sd * standard_normal(rng)).collect(),
    }
}

pub fn gen_sine<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    need(length, 4, "sine_wave")?;
    let p = sample_sine(rng, length);
    let prov = format!("sine_wave(components={})", p.components.len());
    series(render_sine(&p, length), freq, prov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn saw(period: f64, upward: bool) -> SawtoothParams {
        SawtoothParams {
            amplitude: 2.0,
            period,
            phase: 0.0,
            upward,
            trend_slope: 0.0,
            season_amplitude: 0.0,
            season_period: 1.0,
        }
    }

    #[test]
    fn sawtooth_single_ramp() {
        let y = render_sawtooth(&saw(100.0, true), 100);
        assert!(y.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(y[0], 0.0);
        assert!((y[99] - 2.0 * 99.0 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn sawtooth_reset_count() {
        for (len, period) in [(200usize, 7.3f64), (500, 33.1), (64, 5.5)] {
            let y = render_sawtooth(&saw(period, true), len);
            let resets = y.windows(2).filter(|w| w[0] - w[1] > 1.0).count();
            assert_eq!(resets, (len as f64 / period).floor() as usize);
        }
    }

    #[test]
    fn downward_is_mirror() {
        let up = render_sawtooth(&saw(9.0, true), 50);
        let down = render_sawtooth(&saw(9.0, false), 50);
        for (u, d) in up.iter().zip(&down) {
            assert_eq!(*d, 2.0 - u);
        }
    }

    #[test]
    fn flat_step_is_constant() {
        let y = render_step(&StepParams::flat(0.3), 40);
        assert!(y.iter().all(|v| *v == 0.3));
    }

    #[test]
    fn changepoint_count_and_smoothing() {
        let mut rng = seed::rng(1);
        for k in 1..=6 {
            let p = sample_step_plain(&mut rng, 200, k);
            let y = render_step(&p, 200);
            let jumps = y.windows(2).filter(|w| (w[1] - w[0]).abs() > 0.25).count();
            assert_eq!(jumps, k);
            let mut s = p.clone();
            s.smoothing_sigma = Some(1.5);
            let ys = render_step(&s, 200);
            let md = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
            assert!(md(&ys) < md(&y));
        }
    }

    #[test]
    fn anomaly_contracts() {
        let mut p = AnomalyParams {
            baseline: 1.5,
            sign: 1.0,
            positions: vec![],
            magnitudes: vec![],
        };
        assert!(render_anomaly(&p, 30).iter().all(|v| *v == 1.5));
        let mut rng = seed::rng(2);
        p.positions = anomaly_positions(&mut rng, 300, TimingPattern::Single, 20.0, 0.0, 0);
        p.magnitudes = anomaly_magnitudes(&mut rng, p.positions.len(), MagnitudeRegime::Constant, 2.0);
        let y = render_anomaly(&p, 300);
        let spikes: Vec<f64> = y.iter().copied().filter(|v| *v != 1.5).collect();
        assert_eq!(spikes.len(), p.positions.len());
        assert!(spikes.iter().all(|v| *v == spikes[0]));
        for regime in [
            MagnitudeRegime::Constant,
            MagnitudeRegime::Trending,
            MagnitudeRegime::Cyclical,
            MagnitudeRegime::CorrelatedRandom,
        ] {
            for sign in [1.0, -1.0] {
                let q = AnomalyParams {
                    baseline: -0.7,
                    sign,
                    positions: anomaly_positions(&mut rng, 400, TimingPattern::Mixed, 15.0, 0.3, 2),
                    magnitudes: anomaly_magnitudes(&mut rng, 400, regime, 3.0),
                };
                let y = render_anomaly(&q, 400);
                if sign > 0.0 {
                    assert!(y.iter().all(|v| *v >= -0.7));
                } else {
                    assert!(y.iter().all(|v| *v <= -0.7));
                }
            }
        }
        for seed in 0..20 {
            let s = gen_anomaly(&mut seed::rng(seed), 200, Frequency::DAILY).unwrap();
            assert!(s.is_finite());
        }
    }

    #[test]
    fn spread_gaps() {
        let (len, n, margin) = (500usize, 7usize, 11usize);
        let c = spread_centers(len, n, margin);
        let expect = (len - 2 * margin) as f64 / n as f64;
        for w in c.windows(2) {
            assert!(((w[1] - w[0]) as f64 - expect).abs() <= 1.0);
        }
        assert!(c[0] >= margin && *c.last().unwrap() < len - margin);
    }

    #[test]
    fn spikes_exact_outside_support_and_plateau_width() {
        let p = SpikesParams {
            baseline: 0.25,
            amplitude: 2.0,
            sign: 1.0,
            shape: SpikeShape::Plateau { width: 5, ramp: 2 },
            centers: vec![20, 60],
            noise: vec![],
        };
        let y = render_spikes(&p, 100);
        let top = y.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(top, 2.25);
        let mut run = 0;
        let mut runs = Vec::new();
        for v in &y {
            if *v == top {
                run += 1;
            } else if run > 0 {
                runs.push(run);
                run = 0;
            }
        }
        assert_eq!(runs, vec![5, 5]);
        let support: usize = y.iter().filter(|v| **v != 0.25).count();
        assert_eq!(support, 2 * (5 + 2 * 2));
    }

    #[test]
    fn pure_sine_closed_form() {
        let c = SineComponent {
            amplitude: 1.3,
            period: 17.0,
            phase: 0.4,
            am_depth: 0.0,
            am_period: 1.0,
            fm_depth: 0.0,
            fm_period: 1.0,
        };
        let p = SineParams {
            components: vec![c],
            trend_slope: 0.0,
            trend_intercept: 0.0,
            noise: vec![],
        };
        let y = render_sine(&p, 2000);
        for (t, v) in y.iter().enumerate() {
            let e = 1.3 * (2.0 * PI * t as f64 / 17.0 + 0.4).sin();
            assert!((v - e).abs() < 1e-9);
        }
    }

    #[test]
    fn sine_amplitude_bound() {
        let mut rng = seed::rng(3);
        for _ in 0..50 {
            let mut p = sample_sine(&mut rng, 300);
            p.noise.clear();
            for c in p.components.iter_mut() {
                c.am_depth = 0.0;
                c.fm_depth = 0.0;
            }
            let bound: f64 = p.components.iter().map(|c| c.amplitude).sum::<f64>()
                + p.trend_slope.abs() * 299.0
                + p.trend_intercept.abs();
            assert!(render_sine(&p, 300).iter().all(|v| v.abs() <= bound + 1e-12));
        }
    }

    #[test]
    fn frequency_modulation_varies_crossings() {
        let p = SineParams {
            components: vec![SineComponent {
                amplitude: 1.0,
                period: 20.0,
                phase: 0.1,
                am_depth: 0.0,
                am_period: 1.0,
                fm_depth: 0.4,
                fm_period: 1000.0,
            }],
            trend_slope: 0.0,
            trend_intercept: 0.0,
            noise: vec![],
        };
        let y = render_sine(&p, 1000);
        let crossings: Vec<f64> = y
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] < 0.0 && w[1] >= 0.0)
            .map(|(i, w)| i as f64 + w[0] / (w[0] - w[1]))
            .collect();
        let gaps: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
        let lo = gaps.iter().copied().fold(f64::MAX, f64::min);
        let hi = gaps.iter().copied().fold(0.0, f64::max);
        assert!(hi / lo > 1.05, "{lo} {hi}");
    }
}
