//! Offline augmentation cascade and online missing-value injection.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{standard_normal, uniform, weighted_without_replacement};
use crate::seed;
use crate::stats;
use crate::timeseries::{FreqUnit, Scaler, ScalerKind, TimeSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CategoryKind {
    Invariances,
    Structure,
    Seasonality,
    SignalProcessing,
    DiscreteEffects,
    MeasurementArtifacts,
}

impl CategoryKind {
    /// Fixed global application order.
    pub const ORDER: [CategoryKind; 6] = [
        CategoryKind::Invariances,
        CategoryKind::Structure,
        CategoryKind::Seasonality,
        CategoryKind::SignalProcessing,
        CategoryKind::DiscreteEffects,
        CategoryKind::MeasurementArtifacts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CategoryKind::Invariances => "invariances",
            CategoryKind::Structure => "structure",
            CategoryKind::Seasonality => "seasonality",
            CategoryKind::SignalProcessing => "signal_processing",
            CategoryKind::DiscreteEffects => "discrete_effects",
            CategoryKind::MeasurementArtifacts => "measurement_artifacts",
        }
    }

    pub fn transforms(self) -> &'static [Transform] {
        match self {
            CategoryKind::Invariances => &[Transform::Reversal, Transform::SignInversion],
            CategoryKind::Structure => &[Transform::RegimeChange, Transform::Shock],
            CategoryKind::Seasonality => &[Transform::CalendarEffects, Transform::LocalScaling],
            CategoryKind::SignalProcessing => &[
                Transform::Sobel,
                Transform::Laplacian,
                Transform::HigherDerivative,
                Transform::Integration,
            ],
            CategoryKind::DiscreteEffects => &[Transform::Censoring, Transform::Quantization],
            CategoryKind::MeasurementArtifacts => &[Transform::Resampling],
        }
    }
}

impl FromStr for CategoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CategoryKind::ORDER
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown category '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transform {
    Reversal,
    SignInversion,
    RegimeChange,
    Shock,
    CalendarEffects,
    LocalScaling,
    Sobel,
    Laplacian,
    HigherDerivative,
    Integration,
    Censoring,
    Quantization,
    Resampling,
}

impl Transform {
    const ALL: [Transform; 13] = [
        Transform::Reversal,
        Transform::SignInversion,
        Transform::RegimeChange,
        Transform::Shock,
        Transform::CalendarEffects,
        Transform::LocalScaling,
        Transform::Sobel,
        Transform::Laplacian,
        Transform::HigherDerivative,
        Transform::Integration,
        Transform::Censoring,
        Transform::Quantization,
        Transform::Resampling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transform::Reversal => "reversal",
            Transform::SignInversion => "sign_inversion",
            Transform::RegimeChange => "regime_change",
            Transform::Shock => "shock",
            Transform::CalendarEffects => "calendar",
            Transform::LocalScaling => "local_scaling",
            Transform::Sobel => "sobel",
            Transform::Laplacian => "laplacian",
            Transform::HigherDerivative => "higher_derivative",
            Transform::Integration => "integration",
            Transform::Censoring => "censoring",
            Transform::Quantization => "quantization",
            Transform::Resampling => "resampling",
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Transform::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown transform '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CategoryWeights {
    pub invariances: f64,
    pub structure: f64,
    pub seasonality: f64,
    pub signal_processing: f64,
    pub discrete_effects: f64,
    pub measurement_artifacts: f64,
}

impl Default for CategoryWeights {
    fn default() -> Self {
        Self {
            invariances: 0.6,
            structure: 0.6,
            seasonality: 0.5,
            signal_processing: 0.4,
            discrete_effects: 0.6,
            measurement_artifacts: 0.3,
        }
    }
}

impl CategoryWeights {
    /// Weights in `CategoryKind::ORDER`.
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.invariances,
            self.structure,
            self.seasonality,
            self.signal_processing,
            self.discrete_effects,
            self.measurement_artifacts,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub normalize_prob: f64,
    pub early_mixup_prob: f64,
    pub late_mixup_prob: f64,
    pub category_weights: CategoryWeights,
    pub categories_per_series: (usize, usize),
    pub conv_filter_prob: f64,
    pub mixup_alpha: f64,
    pub mixup_max_sources: usize,
    pub time_varying_mixup_prob: f64,
    /// Finishing noise standard deviation as a fraction of the IQR.
    pub finishing_noise: f64,
    pub finishing_scale: (f64, f64),
    pub selection_threshold: f64,
    pub selection_retries: usize,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            normalize_prob: 0.8,
            early_mixup_prob: 0.5,
            late_mixup_prob: 0.25,
            category_weights: CategoryWeights::default(),
            categories_per_series: (2, 5),
            conv_filter_prob: 0.3,
            mixup_alpha: 1.0,
            mixup_max_sources: 10,
            time_varying_mixup_prob: 0.5,
            finishing_noise: 0.01,
            finishing_scale: (0.9, 1.1),
            selection_threshold: 0.05,
            selection_retries: 5,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.normalize_prob,
            self.early_mixup_prob,
            self.late_mixup_prob,
            self.conv_filter_prob,
            self.time_varying_mixup_prob,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("augmentation probabilities must lie in [0, 1]".into()));
        }
        let (lo, hi) = self.categories_per_series;
        if !(1 <= lo && lo <= hi && hi <= 6) {
            return Err(Error::Config(format!("categories_per_series ({lo}, {hi}) outside [1, 6]")));
        }
        if self.category_weights.as_array().iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("category weights must be nonnegative".into()));
        }
        if !(2..=10).contains(&self.mixup_max_sources) || self.mixup_alpha <= 0.0 {
            return Err(Error::Config("mixup needs 2..=10 sources and alpha > 0".into()));
        }
        Ok(())
    }
}

// ------------------------------------------------------------------ mixup

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, k: usize, alpha: f64) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut w: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    } else {
        w = vec![1.0 / k as f64; k];
    }
    w
}

fn check_sources(sources: &[&TimeSeries]) -> Result<usize> {
    if !(2..=10).contains(&sources.len()) {
        return Err(Error::InvalidInput(format!("mixup needs 2-10 sources, got {}", sources.len())));
    }
    let n = sources[0].len();
    if sources.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidInput("mixup sources differ in length".into()));
    }
    Ok(n)
}

/// Per-step weight rows (`n x k`) applied to the sources.
pub fn mixup_with_weights(sources: &[&TimeSeries], weights: &[Vec<f64>]) -> Result<TimeSeries> {
    let n = check_sources(sources)?;
    let values = (0..n)
        .map(|t| {
            let w = &weights[t.min(weights.len() - 1)];
            sources.iter().zip(w).map(|(s, wi)| wi * s.values[t]).sum()
        })
        .collect();
    let mask = (0..n).map(|t| sources.iter().all(|s| s.mask[t])).collect();
    let mut out = sources[0].replace_values(values);
    out.mask = mask;
    Ok(out)
}

/// Static weights from one Dirichlet draw, or a smooth path between two
/// draws (`w(t) = (1 - s(t)) w0 + s(t) w1` with a raised-cosine `s`).
pub fn ts_mixup<R: Rng + ?Sized>(
    sources: &[&TimeSeries],
    rng: &mut R,
    alpha: f64,
    time_varying: bool,
) -> Result<TimeSeries> {
    let n = check_sources(sources)?;
    let k = sources.len();
    let w0 = dirichlet(rng, k, alpha);
    let weights: Vec<Vec<f64>> = if time_varying {
        let w1 = dirichlet(rng, k, alpha);
        (0..n)
            .map(|t| {
                let s = if n > 1 {
                    0.5 - 0.5 * (std::f64::consts::PI * t as f64 / (n - 1) as f64).cos()
                } else {
                    0.0
                };
                w0.iter().zip(&w1).map(|(a, b)| (1.0 - s) * a + s * b).collect()
            })
            .collect()
    } else {
        vec![w0]
    };
    mixup_with_weights(sources, &weights)
}

// ------------------------------------------------------------- transforms

fn iqr(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let r = stats::quantile_sorted(&s, 0.75) - stats::quantile_sorted(&s, 0.25);
    if r > 1e-12 {
        r
    } else {
        stats::std_dev(values).max(1e-12)
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|v| *v == values[0])
}

/// Affine map of `y` onto the `[min, max]` of `reference`. Returns `None`
/// when either range is degenerate.
pub fn restore_range(y: &[f64], reference: &[f64]) -> Option<Vec<f64>> {
    let (rlo, rhi) = min_max(reference);
    let (lo, hi) = min_max(y);
    if !(hi - lo > 1e-12 * (hi.abs() + lo.abs()).max(1e-300)) || rhi <= rlo {
        return None;
    }
    let a = (rhi - rlo) / (hi - lo);
    Some(y.iter().map(|v| (rlo + a * (v - lo)).clamp(rlo, rhi)).collect())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)))
}

fn at(x: &[f64], i: i64) -> f64 {
    x[i.clamp(0, x.len() as i64 - 1) as usize]
}

pub fn sobel(x: &[f64]) -> Vec<f64> {
    (0..x.len() as i64).map(|i| 0.5 * (at(x, i + 1) - at(x, i - 1))).collect()
}

pub fn laplacian(x: &[f64]) -> Vec<f64> {
    (0..x.len() as i64)
        .map(|i| at(x, i - 1) - 2.0 * at(x, i) + at(x, i + 1))
        .collect()
}

/// `order` repeated forward differences, length kept by edge replication.
pub fn repeated_difference(x: &[f64], order: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for _ in 0..order {
        y = (0..y.len() as i64).map(|i| at(&y, i + 1) - at(&y, i)).collect();
    }
    y
}

pub fn cumulative_sum(x: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    x.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Clips every value at the `q`-quantile of the input.
pub fn censor(x: &[f64], q: f64) -> Vec<f64> {
    let c = stats::quantile(x, q).unwrap_or(0.0);
    x.iter().map(|v| v.min(c)).collect()
}

/// First `count` points of the one-dimensional Sobol sequence (Gray-code
/// order, direction numbers `2^-k`) under a random digital shift.
pub fn sobol_points(count: usize, shift: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut x: u32 = 0;
    for i in 0..count as u32 {
        out.push((x ^ shift) as f64 / 4_294_967_296.0);
        let c = (!i).trailing_zeros();
        x ^= 1u32 << (31 - c.min(31));
    }
    out
}

/// Levels at Sobol-placed positions inside `[lo, hi]`, sorted.
pub fn sobol_levels(lo: f64, hi: f64, count: usize, shift: u32) -> Vec<f64> {
    let mut l: Vec<f64> = sobol_points(count, shift).into_iter().map(|u| lo + u * (hi - lo)).collect();
    l.sort_by(|a, b| a.total_cmp(b));
    l
}

/// Snaps each value to the nearest level.
pub fn quantize(x: &[f64], levels: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            *levels
                .iter()
                .min_by(|a, b| (*a - v).abs().total_cmp(&(*b - v).abs()))
                .expect("nonempty levels")
        })
        .collect()
}

/// Keeps every `factor`-th sample (plus the last) and linearly
/// interpolates back to full length.
pub fn resample(x: &[f64], factor: usize) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).step_by(factor.max(1)).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    let mut out = Vec::with_capacity(n);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        for t in a..b {
            let f = (t - a) as f64 / (b - a) as f64;
            out.push(x[a] * (1.0 - f) + x[b] * f);
        }
    }
    out.push(x[n - 1]);
    out
}

fn days_in_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(ny, nm, 1)
        .and_then(|d| d.pred_opt())
        .map_or(28, |d| d.day())
}

fn apply_transform(series: &TimeSeries, t: Transform, stage_seed: u64) -> Result<(TimeSeries, String)> {
    let mut rng = seed::Rng::seed_from_u64(stage_seed);
    let x = &series.values;
    let n = x.len();
    let spread = iqr(x);
    let out = |v: Vec<f64>| series.replace_values(v);
    let mut detail = String::new();
    let res = match t {
        Transform::Reversal => {
            let mut s = series.clone();
            s.values.reverse();
            s.mask.reverse();
            s
        }
        Transform::SignInversion => out(x.iter().map(|v| -v).collect()),
        Transform::RegimeChange => {
            let k = rng.random_range(1..=3usize).min(n - 1);
            let mut cps: Vec<usize> = (0..k).map(|_| rng.random_range(1..n)).collect();
            cps.sort_unstable();
            let mut y = x.clone();
            for (j, &c) in cps.iter().enumerate() {
                let a = uniform(&mut rng, 0.5, 1.5);
                let b = uniform(&mut rng, -0.5, 0.5) * spread;
                let end = cps.get(j + 1).copied().unwrap_or(n);
                for v in &mut y[c..end] {
                    *v = a * *v + b;
                }
            }
            out(y)
        }
        Transform::Shock => {
            let t0 = rng.random_range(0..n);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let amp = sign * uniform(&mut rng, 1.0, 3.0) * spread;
            let tau = uniform(&mut rng, 2.0, (n as f64 / 10.0).max(3.0));
            let y = x
                .iter()
                .enumerate()
                .map(|(i, v)| if i >= t0 { v + amp * (-((i - t0) as f64) / tau).exp() } else { *v })
                .collect();
            out(y)
        }
        Transform::CalendarEffects => {
            let fine = matches!(
                series.freq.unit,
                FreqUnit::Seconds | FreqUnit::Minutes | FreqUnit::Hours | FreqUnit::Days
            );
            if !fine {
                detail = "skipped".into();
                series.clone()
            } else {
                let stamps = series.timestamps()?;
                let dip = uniform(&mut rng, 0.2, 1.0) * spread;
                let spike = uniform(&mut rng, 0.2, 1.5) * spread;
                let y = x
                    .iter()
                    .zip(&stamps)
                    .map(|(v, ts)| {
                        let d = ts.date();
                        let mut w = *v;
                        if matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                            w -= dip;
                        }
                        if d.day() == days_in_month(d.year(), d.month()) {
                            w += spike;
                        }
                        w
                    })
                    .collect();
                out(y)
            }
        }
        Transform::LocalScaling => {
            let len = rng.random_range((n / 10).max(1)..=(n / 2).max(1));
            let a = rng.random_range(0..=n - len);
            let s = uniform(&mut rng, 0.5, 2.0);
            let m = stats::median(x).unwrap_or(0.0);
            let mut y = x.clone();
            for v in &mut y[a..a + len] {
                *v = m + (*v - m) * s;
            }
            out(y)
        }
        Transform::Sobel | Transform::Laplacian | Transform::HigherDerivative | Transform::Integration => {
            let y = match t {
                Transform::Sobel => sobel(x),
                Transform::Laplacian => laplacian(x),
                Transform::HigherDerivative => {
                    let order = rng.random_range(3..=4);
                    detail = format!("order={order}");
                    repeated_difference(x, order)
                }
                _ => cumulative_sum(x),
            };
            match restore_range(&y, x) {
                Some(r) => out(r),
                None => {
                    detail = "degenerate".into();
                    series.clone()
                }
            }
        }
        Transform::Censoring => {
            if is_constant(x) {
                detail = "degenerate".into();
                series.clone()
            } else {
                let q = uniform(&mut rng, 0.8, 0.99);
                detail = format!("q={q:.4}");
                out(censor(x, q))
            }
        }
        Transform::Quantization => {
            if is_constant(x) {
                detail = "degenerate".into();
                series.clone()
            } else {
                let levels = rng.random_range(4..=16usize);
                let shift: u32 = rng.random();
                let (lo, hi) = min_max(x);
                detail = format!("levels={levels}");
                out(quantize(x, &sobol_levels(lo, hi, levels, shift)))
            }
        }
        Transform::Resampling => {
            let f = rng.random_range(2..=4usize);
            detail = format!("factor={f}");
            out(resample(x, f))
        }
    };
    Ok((res, detail))
}

/// Picks one transformation of `kind` uniformly and applies it. Inputs
/// shorter than 4 pass through.
pub fn apply_category<R: Rng + ?Sized>(series: &TimeSeries, kind: CategoryKind, rng: &mut R) -> Result<TimeSeries> {
    Ok(apply_category_logged(series, kind, rng)?.0)
}

fn apply_category_logged<R: Rng + ?Sized>(
    series: &TimeSeries,
    kind: CategoryKind,
    rng: &mut R,
) -> Result<(TimeSeries, Stage)> {
    let ts = kind.transforms();
    let t = ts[rng.random_range(0..ts.len())];
    let stage_seed: u64 = rng.random();
    let stage = Stage::Category {
        kind,
        transform: t,
        seed: stage_seed,
    };
    Ok((run_stage_transform(series, kind, t, stage_seed)?, stage))
}

fn run_stage_transform(series: &TimeSeries, _kind: CategoryKind, t: Transform, seed: u64) -> Result<TimeSeries> {
    if series.len() < 4 {
        return Ok(series.clone());
    }
    Ok(apply_transform(series, t, seed)?.0)
}

/// Applies one transformation with an explicit stage seed.
pub fn apply_transform_seeded(series: &TimeSeries, t: Transform, seed: u64) -> Result<TimeSeries> {
    if series.len() < 4 {
        return Ok(series.clone());
    }
    Ok(apply_transform(series, t, seed)?.0)
}

// ------------------------------------------------------------ convolution

/// Centered dilated convolution with edge replication; output length
/// equals input length.
pub fn convolve_same(x: &[f64], kernel: &[f64], dilation: usize) -> Vec<f64> {
    let k = kernel.len() as i64;
    let d = dilation.max(1) as i64;
    let c = (k - 1) / 2;
    (0..x.len() as i64)
        .map(|i| kernel.iter().enumerate().map(|(j, w)| w * at(x, i + (j as i64 - c) * d)).sum())
        .collect()
}

/// 1-3 convolutions with random length 3..=15, N(0,1) weights scaled to
/// unit l1 norm, and dilation 1..=3.
pub fn random_conv_filter<R: Rng + ?Sized>(series: &TimeSeries, rng: &mut R) -> TimeSeries {
    let mut y = series.values.clone();
    for _ in 0..rng.random_range(1..=3) {
        let len = rng.random_range(3..=15usize).min(y.len().max(1));
        let dil = rng.random_range(1..=3usize);
        let mut w: Vec<f64> = (0..len).map(|_| standard_normal(rng)).collect();
        let l1: f64 = w.iter().map(|v| v.abs()).sum::<f64>().max(1e-12);
        w.iter_mut().for_each(|v| *v /= l1);
        y = convolve_same(&y, &w, dil);
    }
    series.replace_values(y)
}

// --------------------------------------------------------------- pipeline

/// One replayable pipeline stage.
#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    Source { index: usize },
    Normalize { kind: ScalerKind },
    EarlyMixup { others: Vec<usize>, time_varying: bool, seed: u64 },
    Category { kind: CategoryKind, transform: Transform, seed: u64 },
    Conv { seed: u64 },
    LateMixup { others: Vec<usize>, time_varying: bool, seed: u64 },
    Finish { seed: u64 },
    Unaugmented,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Stage::Source { index } => write!(f, "src={index}"),
            Stage::Normalize { kind } => write!(f, "norm={}", kind.name()),
            Stage::EarlyMixup { others, time_varying, seed } => {
                write!(f, "mix_early={}:{}@{seed}", list(others), if *time_varying { "tv" } else { "st" })
            }
            Stage::Category { kind, transform, seed } => {
                write!(f, "cat={}/{}@{seed}", kind.name(), transform.name())
            }
            Stage::Conv { seed } => write!(f, "conv@{seed}"),
            Stage::LateMixup { others, time_varying, seed } => {
                write!(f, "mix_late={}:{}@{seed}", list(others), if *time_varying { "tv" } else { "st" })
            }
            Stage::Finish { seed } => write!(f, "finish@{seed}"),
            Stage::Unaugmented => write!(f, "unaugmented"),
        }
    }
}

fn parse_err(s: &str) -> Error {
    Error::InvalidInput(format!("malformed provenance stage '{s}'"))
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let seed_of = |rest: &str| -> Result<(String, u64)> {
            let (a, b) = rest.rsplit_once('@').ok_or_else(|| parse_err(s))?;
            Ok((a.to_string(), b.parse().map_err(|_| parse_err(s))?))
        };
        let mix = |rest: &str| -> Result<(Vec<usize>, bool, u64)> {
            let (body, seed) = seed_of(rest)?;
            let (list, mode) = body.split_once(':').ok_or_else(|| parse_err(s))?;
            let others = list
                .split(',')
                .filter(|x| !x.is_empty())
                .map(|x| x.parse().map_err(|_| parse_err(s)))
                .collect::<Result<Vec<usize>>>()?;
            Ok((others, mode == "tv", seed))
        };
        if s == "unaugmented" {
            return Ok(Stage::Unaugmented);
        }
        if let Some(r) = s.strip_prefix("src=") {
            return Ok(Stage::Source {
                index: r.parse().map_err(|_| parse_err(s))?,
            });
        }
        if let Some(r) = s.strip_prefix("norm=") {
            return Ok(Stage::Normalize {
                kind: ScalerKind::from_name(r).ok_or_else(|| parse_err(s))?,
            });
        }
        if let Some(r) = s.strip_prefix("mix_early=") {
            let (others, time_varying, seed) = mix(r)?;
            return Ok(Stage::EarlyMixup { others, time_varying, seed });
        }
        if let Some(r) = s.strip_prefix("mix_late=") {
            let (others, time_varying, seed) = mix(r)?;
            return Ok(Stage::LateMixup { others, time_varying, seed });
        }
        if let Some(r) = s.strip_prefix("cat=") {
            let (body, seed) = seed_of(r)?;
            let (k, t) = body.split_once('/').ok_or_else(|| parse_err(s))?;
            return Ok(Stage::Category {
                kind: k.parse()?,
                transform: t.parse()?,
                seed,
            });
        }
        if let Some(r) = s.strip_prefix("conv@") {
            return Ok(Stage::Conv {
                seed: r.parse().map_err(|_| parse_err(s))?,
            });
        }
        if let Some(r) = s.strip_prefix("finish@") {
            return Ok(Stage::Finish {
                seed: r.parse().map_err(|_| parse_err(s))?,
            });
        }
        Err(parse_err(s))
    }
}

pub fn format_provenance(stages: &[Stage]) -> String {
    stages.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("|")
}

pub fn parse_provenance(p: &str) -> Result<Vec<Stage>> {
    p.split('|').map(str::parse).collect()
}

/// Categories recorded in a provenance string.
pub fn provenance_categories(p: &str) -> Vec<CategoryKind> {
    parse_provenance(p)
        .unwrap_or_default()
        .into_iter()
        .filter_map(|s| match s {
            Stage::Category { kind, .. } => Some(kind),
            _ => None,
        })
        .collect()
}

/// `0.5 (1 - |pearson|) + 0.5 min(1, rms(out - src) / std(src))`.
pub fn change_score(source: &[f64], output: &[f64]) -> f64 {
    let r = stats::pearson(source, output);
    let r = if r.is_finite() { r.abs() } else { 0.0 };
    let rms = (source.iter().zip(output).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / source.len().max(1) as f64).sqrt();
    let sd = stats::std_dev(source);
    let rel = if sd > 1e-12 { (rms / sd).min(1.0) } else if rms > 1e-12 { 1.0 } else { 0.0 };
    0.5 * (1.0 - r) + 0.5 * rel
}

fn mix_stage(
    current: &TimeSeries,
    pool: &[TimeSeries],
    others: &[usize],
    time_varying: bool,
    seed: u64,
    alpha: f64,
    normalize: Option<ScalerKind>,
) -> Result<TimeSeries> {
    let mut rng = seed::Rng::seed_from_u64(seed);
    let prepared: Vec<TimeSeries> = others
        .iter()
        .map(|&i| {
            let s = pool.get(i).ok_or_else(|| Error::InvalidInput(format!("pool index {i} out of range")))?;
            match normalize {
                Some(k) => Ok(Scaler::fit_series(k, s)?.apply(s)),
                None => Ok(s.clone()),
            }
        })
        .collect::<Result<_>>()?;
    let mut refs: Vec<&TimeSeries> = vec![current];
    refs.extend(prepared.iter());
    let mut out = ts_mixup(&refs, &mut rng, alpha, time_varying)?;
    out.id = current.id.clone();
    out.provenance = current.provenance.clone();
    Ok(out)
}

fn finish_stage(series: &TimeSeries, seed: u64, config: &AugmentationConfig) -> TimeSeries {
    let mut rng = seed::Rng::seed_from_u64(seed);
    let s = uniform(&mut rng, config.finishing_scale.0, config.finishing_scale.1);
    let sd = config.finishing_noise * iqr(&series.values);
    let y = series
        .values
        .iter()
        .map(|v| s * v + sd * standard_normal(&mut rng))
        .collect();
    series.replace_values(y)
}

/// Re-executes a stage list against `pool`. The output is bit-identical to
/// the pipeline run that produced the stages.
pub fn replay(pool: &[TimeSeries], stages: &[Stage], config: &AugmentationConfig) -> Result<TimeSeries> {
    let mut current: Option<TimeSeries> = None;
    let mut norm: Option<ScalerKind> = None;
    for stage in stages {
        let cur = || current.clone().ok_or_else(|| Error::InvalidInput("stage before source".into()));
        current = Some(match stage {
            Stage::Source { index } => pool
                .get(*index)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("pool index {index} out of range")))?,
            Stage::Normalize { kind } => {
                norm = Some(*kind);
                let c = cur()?;
                Scaler::fit_series(*kind, &c)?.apply(&c)
            }
            Stage::EarlyMixup { others, time_varying, seed } | Stage::LateMixup { others, time_varying, seed } => {
                mix_stage(&cur()?, pool, others, *time_varying, *seed, config.mixup_alpha, norm)?
            }
            Stage::Category { kind, transform, seed } => run_stage_transform(&cur()?, *kind, *transform, *seed)?,
            Stage::Conv { seed } => random_conv_filter(&cur()?, &mut seed::Rng::seed_from_u64(*seed)),
            Stage::Finish { seed } => finish_stage(&cur()?, *seed, config),
            Stage::Unaugmented => cur()?,
        });
    }
    let mut out = current.ok_or_else(|| Error::InvalidInput("empty stage list".into()))?;
    out.provenance = format_provenance(stages);
    Ok(out)
}

fn pick_others<R: Rng + ?Sized>(rng: &mut R, pool: &[TimeSeries], primary: usize, max_total: usize) -> Vec<usize> {
    let n = pool[primary].len();
    let candidates: Vec<usize> = (0..pool.len())
        .filter(|&i| i != primary && pool[i].len() == n)
        .collect();
    if candidates.is_empty() {
        return Vec::new();
    }
    let want = rng.random_range(1..=(max_total - 1).min(candidates.len()));
    let mut c = candidates;
    let mut out = Vec::with_capacity(want);
    for _ in 0..want {
        let j = rng.random_range(0..c.len());
        out.push(c.swap_remove(j));
    }
    out
}

/// Category count uniform on `categories_per_series`, then categories
/// drawn by weight without replacement, returned in pipeline order.
pub fn sample_categories<R: Rng + ?Sized>(rng: &mut R, config: &AugmentationConfig) -> Vec<CategoryKind> {
    let (lo, hi) = config.categories_per_series;
    let k = rng.random_range(lo..=hi);
    let mut chosen = weighted_without_replacement(rng, &config.category_weights.as_array(), k);
    chosen.sort_unstable();
    chosen.into_iter().map(|ci| CategoryKind::ORDER[ci]).collect()
}

fn sample_stages<R: Rng + ?Sized>(pool: &[TimeSeries], rng: &mut R, config: &AugmentationConfig) -> Vec<Stage> {
    let mut stages = Vec::new();
    let index = rng.random_range(0..pool.len());
    stages.push(Stage::Source { index });
    if rng.random::<f64>() < config.normalize_prob {
        stages.push(Stage::Normalize {
            kind: ScalerKind::random(rng),
        });
    }
    if rng.random::<f64>() < config.early_mixup_prob {
        let others = pick_others(rng, pool, index, config.mixup_max_sources);
        let time_varying = rng.random::<f64>() < config.time_varying_mixup_prob;
        let seed: u64 = rng.random();
        if !others.is_empty() {
            stages.push(Stage::EarlyMixup { others, time_varying, seed });
        }
    }
    for kind in sample_categories(rng, config) {
        let ts = kind.transforms();
        let transform = ts[rng.random_range(0..ts.len())];
        stages.push(Stage::Category {
            kind,
            transform,
            seed: rng.random(),
        });
    }
    if rng.random::<f64>() < config.conv_filter_prob {
        stages.push(Stage::Conv { seed: rng.random() });
    }
    if rng.random::<f64>() < config.late_mixup_prob {
        let others = pick_others(rng, pool, index, config.mixup_max_sources);
        let time_varying = rng.random::<f64>() < config.time_varying_mixup_prob;
        let seed: u64 = rng.random();
        if !others.is_empty() {
            stages.push(Stage::LateMixup { others, time_varying, seed });
        }
    }
    stages.push(Stage::Finish { seed: rng.random() });
    stages
}

/// Runs the cascade on a random pool member. Outputs whose change score
/// against the (normalized) source stays under the threshold are redrawn;
/// after `selection_retries` failures the source is returned unchanged with
/// an `unaugmented` provenance.
pub fn augment_pipeline<R: Rng + ?Sized>(
    pool: &[TimeSeries],
    rng: &mut R,
    config: &AugmentationConfig,
) -> Result<TimeSeries> {
    if pool.is_empty() {
        return Err(Error::InvalidInput("augmentation source pool is empty".into()));
    }
    config.validate()?;
    let mut last_source = 0;
    for _ in 0..config.selection_retries.max(1) {
        let stages = sample_stages(pool, rng, config);
        let out = replay(pool, &stages, config)?;
        let Stage::Source { index } = stages[0] else { unreachable!() };
        last_source = index;
        if !out.is_finite() {
            continue;
        }
        let reference = match stages.get(1) {
            Some(Stage::Normalize { kind }) => Scaler::fit_series(*kind, &pool[index])?.apply(&pool[index]),
            _ => pool[index].clone(),
        };
        if config.selection_threshold <= 0.0 || change_score(&reference.values, &out.values) >= config.selection_threshold {
            return Ok(out);
        }
    }
    replay(
        pool,
        &[Stage::Source { index: last_source }, Stage::Unaugmented],
        config,
    )
}

// --------------------------------------------------------- missing values

/// Result of `nan_inject`.
#[derive(Clone, Debug, PartialEq)]
pub struct NanInjection {
    pub series: TimeSeries,
    pub missing_fraction: f64,
}

/// Marks positions in `[0, history_len)` missing: i.i.d. point drops plus
/// geometric-length blocks (mean `block_mean_len`) starting at each
/// position with probability `block_rate`.
pub fn nan_inject<R: Rng + ?Sized>(
    series: &TimeSeries,
    rng: &mut R,
    point_rate: f64,
    block_rate: f64,
    block_mean_len: f64,
    history_len: Option<usize>,
) -> Result<NanInjection> {
    if !(0.0..=1.0).contains(&point_rate) || !(0.0..=1.0).contains(&block_rate) {
        return Err(Error::InvalidInput("NaN rates must lie in [0, 1]".into()));
    }
    let h = history_len.unwrap_or(series.len()).min(series.len());
    let mut out = series.clone();
    if point_rate > 0.0 {
        for i in 0..h {
            if rng.random::<f64>() < point_rate {
                out.mask[i] = false;
            }
        }
    }
    if block_rate > 0.0 {
        let p = 1.0 / block_mean_len.max(1.0);
        let geo = Geometric::new(p).map_err(|e| Error::InvalidInput(format!("block length: {e}")))?;
        let mut i = 0;
        while i < h {
            if rng.random::<f64>() < block_rate {
                let len = 1 + geo.sample(rng) as usize;
                for m in out.mask.iter_mut().take(h.min(i + len)).skip(i) {
                    *m = false;
                }
                i += len;
            } else {
                i += 1;
            }
        }
    }
    for (v, m) in out.values.iter_mut().zip(&out.mask) {
        if !m {
            *v = 0.0;
        }
    }
    let missing_fraction = out.mask[..h].iter().filter(|m| !**m).count() as f64 / h.max(1) as f64;
    Ok(NanInjection {
        series: out,
        missing_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::Frequency;
    use proptest::prelude::*;

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::from_values(v, Frequency::DAILY).unwrap()
    }

    fn noise(seed: u64, n: usize) -> TimeSeries {
        let mut rng = seed::rng(seed);
        ts((0..n).map(|i| (i as f64 * 0.3).sin() + 0.3 * standard_normal(&mut rng)).collect())
    }

    #[test]
    fn mixup_identical_and_forced_weights() {
        let a = noise(1, 50);
        let b = noise(2, 50);
        let m = ts_mixup(&[&a, &a, &a], &mut seed::rng(3), 0.5, true).unwrap();
        for (x, y) in m.values.iter().zip(&a.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let f = mixup_with_weights(&[&a, &b], &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(f.values, a.values);
        assert!(ts_mixup(&[&a, &noise(3, 49)], &mut seed::rng(3), 1.0, false).is_err());
    }

    #[test]
    fn time_varying_mixup_is_in_hull() {
        let srcs: Vec<TimeSeries> = (0..5).map(|s| noise(s, 80)).collect();
        let refs: Vec<&TimeSeries> = srcs.iter().collect();
        let m = ts_mixup(&refs, &mut seed::rng(9), 0.7, true).unwrap();
        for t in 0..80 {
            let lo = srcs.iter().map(|s| s.values[t]).fold(f64::MAX, f64::min);
            let hi = srcs.iter().map(|s| s.values[t]).fold(f64::MIN, f64::max);
            assert!(m.values[t] >= lo - 1e-12 && m.values[t] <= hi + 1e-12);
        }
    }

    #[test]
    fn involutions_are_bit_exact() {
        let a = noise(4, 64);
        for t in [Transform::Reversal, Transform::SignInversion] {
            let once = apply_transform_seeded(&a, t, 1).unwrap();
            let twice = apply_transform_seeded(&once, t, 2).unwrap();
            assert_eq!(
                twice.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn sobol_first_points() {
        let p = sobol_points(8, 0);
        assert_eq!(p, vec![0.0, 0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125]);
        let mut q = sobol_points(16, 0x1234_5678);
        q.sort_by(|a, b| a.total_cmp(b));
        q.dedup();
        assert_eq!(q.len(), 16);
    }

    #[test]
    fn quantization_level_contract() {
        let a = noise(5, 300);
        let (lo, hi) = min_max(&a.values);
        let levels = sobol_levels(lo, hi, 8, 77);
        let q = quantize(&a.values, &levels);
        let mut d = q.clone();
        d.sort_by(|a, b| a.total_cmp(b));
        d.dedup();
        assert!(d.len() <= 8);
        assert!(d.iter().all(|v| levels.contains(v)));
    }

    #[test]
    fn derivative_outputs_restore_range() {
        let a = noise(6, 100);
        let (lo, hi) = min_max(&a.values);
        for t in [Transform::Sobel, Transform::Laplacian, Transform::HigherDerivative, Transform::Integration] {
            let y = apply_transform_seeded(&a, t, 3).unwrap();
            let (ylo, yhi) = min_max(&y.values);
            assert!((ylo - lo).abs() < 1e-9 && (yhi - hi).abs() < 1e-9, "{t:?}");
        }
    }

    #[test]
    fn constant_inputs_pass_through() {
        let c = ts(vec![2.0; 20]);
        for t in Transform::ALL {
            if matches!(t, Transform::Sobel | Transform::Laplacian | Transform::HigherDerivative | Transform::Integration | Transform::Censoring | Transform::Quantization) {
                assert_eq!(apply_transform_seeded(&c, t, 5).unwrap().values, c.values, "{t:?}");
            }
        }
    }

    #[test]
    fn calendar_effects_skip_coarse_frequencies() {
        let mut m = noise(7, 40);
        m.freq = Frequency::of(FreqUnit::Months);
        assert_eq!(apply_transform_seeded(&m, Transform::CalendarEffects, 1).unwrap().values, m.values);
        let d = noise(7, 40);
        let y = apply_transform_seeded(&d, Transform::CalendarEffects, 1).unwrap();
        // Start is a Monday: index 5 is Saturday, index 2 a Wednesday.
        assert!(y.values[5] < d.values[5]);
        assert_eq!(y.values[2], d.values[2]);
    }

    #[test]
    fn conv_contracts() {
        let a = noise(8, 60);
        assert_eq!(convolve_same(&a.values, &[1.0], 2), a.values);
        let c = vec![4.0; 30];
        for v in convolve_same(&c, &[1.0 / 3.0; 3], 3) {
            assert!((v - 4.0).abs() < 1e-12);
        }
        let mut rng = seed::rng(1);
        for _ in 0..50 {
            assert_eq!(random_conv_filter(&a, &mut rng).len(), 60);
        }
    }

    #[test]
    fn reductions_and_replay() {
        let pool: Vec<TimeSeries> = (0..6).map(|s| noise(s, 96)).collect();
        let cfg = AugmentationConfig {
            normalize_prob: 0.0,
            early_mixup_prob: 0.0,
            late_mixup_prob: 0.0,
            conv_filter_prob: 0.0,
            category_weights: CategoryWeights {
                invariances: 0.0,
                structure: 0.0,
                seasonality: 0.0,
                signal_processing: 0.0,
                discrete_effects: 0.0,
                measurement_artifacts: 0.0,
            },
            selection_threshold: 0.0,
            ..Default::default()
        };
        let out = augment_pipeline(&pool, &mut seed::rng(2), &cfg).unwrap();
        let stages = parse_provenance(&out.provenance).unwrap();
        assert_eq!(stages.len(), 2);
        assert!(matches!(stages[1], Stage::Finish { .. }));

        let mut rng = seed::rng(3);
        for _ in 0..200 {
            let out = augment_pipeline(&pool, &mut rng, &AugmentationConfig::default()).unwrap();
            assert_eq!(out.len(), 96);
            assert!(out.is_finite());
            let again = replay(&pool, &parse_provenance(&out.provenance).unwrap(), &AugmentationConfig::default()).unwrap();
            assert_eq!(again, out);
        }
        let a = augment_pipeline(&pool, &mut seed::rng(4), &AugmentationConfig::default()).unwrap();
        let b = augment_pipeline(&pool, &mut seed::rng(4), &AugmentationConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn categories_follow_global_order() {
        let pool: Vec<TimeSeries> = (0..3).map(|s| noise(s, 64)).collect();
        let mut rng = seed::rng(5);
        for _ in 0..100 {
            let out = augment_pipeline(&pool, &mut rng, &AugmentationConfig::default()).unwrap();
            let cats = provenance_categories(&out.provenance);
            assert!(cats.windows(2).all(|w| w[0] < w[1]));
            if !out.provenance.contains("unaugmented") {
                assert!((2..=5).contains(&cats.len()));
            }
        }
    }

    #[test]
    fn nan_rates() {
        let s = ts(vec![1.0; 10_000]);
        let r = nan_inject(&s, &mut seed::rng(1), 0.0, 0.0, 5.0, None).unwrap();
        assert_eq!(r.series.mask, s.mask);
        let r = nan_inject(&s, &mut seed::rng(2), 0.9, 0.0, 5.0, None).unwrap();
        assert!((r.missing_fraction - 0.9).abs() < 0.01);
        let r = nan_inject(&s, &mut seed::rng(3), 0.5, 0.1, 5.0, Some(4000)).unwrap();
        assert!(r.series.mask[4000..].iter().all(|m| *m));
    }

    #[test]
    fn block_lengths_are_geometric() {
        let n = 2_500_000;
        let s = ts(vec![0.5; n]);
        let r = nan_inject(&s, &mut seed::rng(4), 0.0, 0.004, 5.0, None).unwrap();
        let mut runs = Vec::new();
        let mut cur = 0usize;
        for m in &r.series.mask {
            if !m {
                cur += 1;
            } else if cur > 0 {
                runs.push(cur);
                cur = 0;
            }
        }
        assert!(runs.len() >= 9_000, "{}", runs.len());
        let mean = runs.iter().sum::<usize>() as f64 / runs.len() as f64;
        assert!((mean / 5.0 - 1.0).abs() < 0.1, "{mean}");
    }

    proptest! {
        #[test]
        fn censoring_never_exceeds_quantile(v in proptest::collection::vec(-100.0f64..100.0, 4..200), q in 0.05f64..0.99) {
            let c = stats::quantile(&v, q).unwrap();
            for x in censor(&v, q) {
                prop_assert!(x <= c);
            }
        }

        #[test]
        fn censor_stage_respects_clip(seed in 0u64..1000) {
            let a = noise(seed, 50);
            let out = apply_transform_seeded(&a, Transform::Censoring, seed).unwrap();
            // Stage clips at q >= 0.8, so nothing exceeds the 0.99-quantile.
            let c = stats::quantile(&a.values, 0.99).unwrap();
            prop_assert!(out.values.iter().all(|x| *x <= c));
        }

        #[test]
        fn reversal_twice_is_identity(v in proptest::collection::vec(-1e6f64..1e6, 4..100)) {
            let a = ts(v);
            let r = apply_transform_seeded(&apply_transform_seeded(&a, Transform::Reversal, 0).unwrap(), Transform::Reversal, 0).unwrap();
            prop_assert_eq!(r.values, a.values);
        }
    }
}
