//! Multiplicative trend x seasonality x noise generator.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Weibull};

use crate::error::{Error, Result};
use crate::sampling::uniform;
use crate::stats;
use crate::timeseries::{FreqUnit, Frequency, TimeSeries};

#[derive(Clone, Debug, PartialEq)]
pub struct SeasonalTerm {
    pub period: f64,
    pub strength: f64,
    pub offset: f64,
    /// `(c_h, d_h)` for harmonics `h = 1, 2, ...`; normalized so that
    /// `sum(|c_h| + |d_h|) <= 1`.
    pub harmonics: Vec<(f64, f64)>,
}

impl SeasonalTerm {
    fn shape(&self, t: f64) -> f64 {
        self.harmonics
            .iter()
            .enumerate()
            .map(|(h, (c, d))| {
                let w = 2.0 * PI * (h + 1) as f64 * (t + self.offset) / self.period;
                c * w.sin() + d * w.cos()
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastPfnParams {
    pub base: f64,
    pub linear_slope: f64,
    pub linear_offset: f64,
    pub exp_base: f64,
    pub exp_offset: f64,
    pub seasons: Vec<SeasonalTerm>,
    pub noise_shape: f64,
    pub noise_scale: f64,
}

impl ForecastPfnParams {
    /// All dynamics off: renders a constant series equal to `base`.
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            linear_slope: 0.0,
            linear_offset: 0.0,
            exp_base: 1.0,
            exp_offset: 0.0,
            seasons: Vec::new(),
            noise_shape: 1.0,
            noise_scale: 0.0,
        }
    }

    pub fn trend(&self, t: f64) -> f64 {
        (self.base + self.linear_slope * (t + self.linear_offset)) * self.exp_base.powf(t + self.exp_offset)
    }

    pub fn seasonality(&self, t: f64) -> f64 {
        self.seasons.iter().map(|s| 1.0 + s.strength * s.shape(t)).product()
    }
}

/// `trend(t) * seasonality(t) * (1 + n(t))` with centered Weibull noise.
pub fn render<R: Rng + ?Sized>(params: &ForecastPfnParams, length: usize, rng: &mut R) -> Result<Vec<f64>> {
    let noise: Vec<f64> = if params.noise_scale > 0.0 {
        let w = Weibull::new(1.0, params.noise_shape)
            .map_err(|e| Error::InvalidInput(format!("Weibull noise: {e}")))?;
        let med = std::f64::consts::LN_2.powf(1.0 / params.noise_shape);
        (0..length).map(|_| params.noise_scale * (w.sample(rng) - med)).collect()
    } else {
        vec![0.0; length]
    };
    Ok((0..length)
        .map(|i| {
            let t = i as f64;
            params.trend(t) * params.seasonality(t) * (1.0 + noise[i])
        })
        .collect())
}

fn calendar_periods(freq: Frequency) -> Vec<f64> {
    let m = freq.multiple as f64;
    let raw: &[f64] = match freq.unit {
        FreqUnit::Seconds => &[60.0, 3600.0],
        FreqUnit::Minutes => &[60.0, 1440.0],
        FreqUnit::Hours => &[24.0, 168.0],
        FreqUnit::Days => &[7.0, 30.4375, 365.25],
        FreqUnit::Weeks => &[52.1775],
        FreqUnit::Months => &[12.0],
        FreqUnit::Quarters => &[4.0],
        FreqUnit::Years => &[],
    };
    raw.iter().map(|p| p / m).filter(|p| *p >= 2.0).collect()
}

pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> ForecastPfnParams {
    let l = length as f64;
    let base = uniform(rng, 0.5, 2.0);
    let u = uniform(rng, -(1000f64.ln()), 1000f64.ln());
    let kept: Vec<f64> = calendar_periods(freq)
        .into_iter()
        .filter(|_| rng.random::<f64>() < 0.6)
        .collect();
    let seasons = kept
        .into_iter()
        .map(|period| {
            let nh = rng.random_range(1..=3);
            let raw: Vec<(f64, f64)> = (0..nh)
                .map(|h| {
                    let s = 1.0 / (h + 1) as f64;
                    (uniform(rng, -s, s), uniform(rng, -s, s))
                })
                .collect();
            let norm: f64 = raw.iter().map(|(c, d)| c.abs() + d.abs()).sum::<f64>().max(1e-12);
            SeasonalTerm {
                period,
                strength: uniform(rng, 0.0, 0.5),
                offset: uniform(rng, 0.0, period),
                harmonics: raw.into_iter().map(|(c, d)| (c / norm, d / norm)).collect(),
            }
        })
        .collect();
    ForecastPfnParams {
        base,
        linear_slope: base * uniform(rng, -1.0, 1.0) / l,
        linear_offset: uniform(rng, -l / 2.0, l / 2.0),
        exp_base: (u / l).exp(),
        exp_offset: -uniform(rng, 0.0, l),
        seasons,
        noise_shape: uniform(rng, 1.0, 5.0),
        noise_scale: uniform(rng, 0.0, 0.1),
    }
}

/// Monotone warp `u + a sin(2 pi u) / (2 pi)` of the unit interval with
/// linear interpolation; `|a| < 1` keeps it increasing.
pub fn time_warp(values: &[f64], a: f64) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return values.to_vec();
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let u = i as f64 / last;
            let w = ((u + a * (2.0 * PI * u).sin() / (2.0 * PI)) * last).clamp(0.0, last);
            let lo = w.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let f = w - lo as f64;
            values[lo] * (1.0 - f) + values[hi] * f
        })
        .collect()
}

/// Ratio of the largest magnitude to the median magnitude.
pub fn extreme_ratio(values: &[f64]) -> f64 {
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let max = abs.iter().copied().fold(0.0, f64::max);
    let med = stats::median(&abs).unwrap_or(0.0);
    if max == 0.0 {
        1.0
    } else {
        max / med.max(1e-300)
    }
}

fn passes_filter(values: &[f64], ratio: f64) -> bool {
    values.iter().all(|v| v.is_finite()) && stats::std_dev(values) > 1e-9 && extreme_ratio(values) <= ratio
}

fn augment<R: Rng + ?Sized>(mut y: Vec<f64>, rng: &mut R, prob: f64, tags: &mut Vec<&'static str>) -> Vec<f64> {
    if rng.random::<f64>() < prob {
        y = time_warp(&y, uniform(rng, -0.5, 0.5));
        tags.push("warp");
    }
    if rng.random::<f64>() < prob {
        let s = uniform(rng, 0.5, 2.0);
        y.iter_mut().for_each(|v| *v *= s);
        tags.push("scale");
    }
    if rng.random::<f64>() < prob {
        let lam = uniform(rng, 0.0, 2.0);
        let m = stats::mean(&y);
        let n = y.len() as f64;
        y.iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = m + (*v - m) * (-lam * i as f64 / n).exp());
        tags.push("damp");
    }
    if rng.random::<f64>() < prob {
        let sd = stats::std_dev(&y);
        for _ in 0..rng.random_range(1..=3) {
            let i = rng.random_range(0..y.len());
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            y[i] += sign * uniform(rng, 3.0, 6.0) * sd;
        }
        tags.push("spikes");
    }
    y
}

pub fn gen_forecastpfn<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    gen_forecastpfn_with(rng, length, freq, 20, 1e3, 0.2)
}

/// Samples, renders, augments and filters, retrying up to `retries` times.
pub fn gen_forecastpfn_with<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    freq: Frequency,
    retries: usize,
    filter_ratio: f64,
    augment_prob: f64,
) -> Result<TimeSeries> {
    if length < 8 {
        return Err(Error::InvalidInput(format!("forecast_pfn needs length >= 8, got {length}")));
    }
    for _ in 0..retries {
        let params = sample_params(rng, length, freq);
        let y = render(&params, length, rng)?;
        let mut tags = Vec::new();
        let y = augment(y, rng, augment_prob, &mut tags);
        if passes_filter(&y, filter_ratio) {
            let prov = format!(
                "forecast_pfn(seasons={},aug=[{}])",
                params.seasons.len(),
                tags.join(",")
            );
            return Ok(TimeSeries::from_values(y, freq)?.with_provenance(prov));
        }
    }
    Err(Error::RetryExhausted {
        what: "forecast_pfn filter",
        attempts: retries,
    })
}
