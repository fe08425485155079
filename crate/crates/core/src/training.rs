//! Toy-scale pretraining: structure sampling, batch composition, quantile
//! loss, AdamW with warmup schedules, checkpointing and exact resume.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::nan_inject;
use crate::error::{Error, Result};
use crate::generators::{self, GeneratorSettings, Source};
use crate::model::network::{check_grads, gradient_sum, pinball};
use crate::model::tensor::Mat;
use crate::model::{decays, save_checkpoint, Model, ModelConfig, Parameters, SeqTokens, TokenBatch};
use crate::sampling::{uniform, weighted_index};
use crate::seed;
use crate::timeseries::{FreqUnit, Frequency, Scaler, ScalerKind, TimeSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Cosine,
    WarmupStableDecay,
    CosineWithRestarts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NanAugConfig {
    /// Probability that a slot receives missing values at all.
    pub prob: f64,
    /// Point drop rate is uniform on `[0, max_point_rate]`.
    pub max_point_rate: f64,
    pub block_rate: f64,
    pub block_mean_len: f64,
}

impl Default for NanAugConfig {
    fn default() -> Self {
        Self {
            prob: 0.3,
            max_point_rate: 0.2,
            block_rate: 0.01,
            block_mean_len: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub min_lr_ratio: f64,
    pub warmup_ratio: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub accumulation: usize,
    pub length_distribution: BTreeMap<usize, f64>,
    pub cut_vs_subsample: f64,
    pub horizon_range: (usize, usize),
    pub scaler_aug_prob: f64,
    pub nan_aug: NanAugConfig,
    /// Source name to mixture weight; absent sources weigh 1.
    pub mixture: BTreeMap<String, f64>,
    pub schedule: ScheduleKind,
    /// Plateau fraction of the warmup-stable-decay schedule.
    pub stable_ratio: f64,
    pub restarts: usize,
    pub log_every: usize,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    /// Compose the next batch on a producer thread while the current one trains.
    pub prefetch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mut mixture: BTreeMap<String, f64> = Source::all().into_iter().map(|s| (s.name().to_string(), 1.0)).collect();
        mixture.insert("cau_ker".into(), 2.0);
        mixture.insert("augmented".into(), 3.0);
        Self {
            peak_lr: 2e-4,
            min_lr_ratio: 0.01,
            warmup_ratio: 0.003,
            betas: (0.9, 0.98),
            weight_decay: 0.01,
            adam_eps: 1e-6,
            grad_clip: 100.0,
            iterations: 1000,
            batch_size: 32,
            accumulation: 1,
            length_distribution: [(128, 0.05), (256, 0.10), (512, 0.10), (1024, 0.10), (1536, 0.15), (2048, 0.50)]
                .into_iter()
                .collect(),
            cut_vs_subsample: 0.5,
            horizon_range: (1, 900),
            scaler_aug_prob: 0.5,
            nan_aug: NanAugConfig::default(),
            mixture,
            schedule: ScheduleKind::Cosine,
            stable_ratio: 0.9,
            restarts: 3,
            log_every: 10,
            checkpoint_every: 0,
            prefetch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let total: f64 = self.length_distribution.values().sum();
        if self.length_distribution.is_empty() || (total - 1.0).abs() > 1e-9 {
            return bad("length_distribution must sum to 1");
        }
        if self.length_distribution.iter().any(|(l, w)| *l < 2 || *w < 0.0) {
            return bad("lengths must be >= 2 with nonnegative weights");
        }
        let (lo, hi) = self.horizon_range;
        if lo == 0 || lo > hi {
            return bad("horizon_range must satisfy 1 <= lo <= hi");
        }
        for p in [self.cut_vs_subsample, self.scaler_aug_prob, self.nan_aug.prob, self.nan_aug.max_point_rate, self.nan_aug.block_rate] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if self.batch_size == 0 || self.accumulation == 0 {
            return bad("batch_size and accumulation must be positive");
        }
        if !(self.peak_lr >= 0.0) || !(0.0..=1.0).contains(&self.min_lr_ratio) || !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad("invalid learning-rate schedule");
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) || self.adam_eps <= 0.0 || self.grad_clip <= 0.0 {
            return bad("invalid optimizer settings");
        }
        if self.mixture.values().any(|w| *w < 0.0 || !w.is_finite()) {
            return bad("mixture weights must be nonnegative");
        }
        Ok(())
    }
}

// ------------------------------------------------------------- structure

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortenMode {
    Cut,
    Subsample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Structure {
    pub total_len: usize,
    pub history_len: usize,
    pub horizon: usize,
    pub mode: ShortenMode,
}

fn sample_horizon<R: Rng + ?Sized>(rng: &mut R, total: usize, range: (usize, usize)) -> usize {
    let cap = (total / 2).max(1);
    let lo = range.0.min(cap);
    let hi = range.1.min(cap);
    rng.random_range(lo..=hi)
}

/// Total length from the weighted distribution, a shortening mode, and a
/// horizon uniform on the range capped at half the length.
pub fn sample_structure<R: Rng + ?Sized>(rng: &mut R, cfg: &TrainConfig) -> Structure {
    let lens: Vec<usize> = cfg.length_distribution.keys().copied().collect();
    let weights: Vec<f64> = cfg.length_distribution.values().copied().collect();
    let total_len = lens[weighted_index(rng, &weights)];
    let mode = if rng.random::<f64>() < cfg.cut_vs_subsample {
        ShortenMode::Cut
    } else {
        ShortenMode::Subsample
    };
    let horizon = sample_horizon(rng, total_len, cfg.horizon_range);
    Structure {
        total_len,
        history_len: total_len - horizon,
        horizon,
        mode,
    }
}

/// Shortens `series` to `len` points: a random contiguous window, or
/// stride decimation at a random phase.
pub fn shorten<R: Rng + ?Sized>(series: &TimeSeries, len: usize, mode: ShortenMode, rng: &mut R) -> Result<TimeSeries> {
    let n = series.len();
    if len >= n {
        return Ok(series.clone());
    }
    let stride = n / len;
    if mode == ShortenMode::Cut || stride < 2 {
        let from = rng.random_range(0..=n - len);
        return series.window(from, len);
    }
    let span = (len - 1) * stride + 1;
    let phase = rng.random_range(0..=n - span);
    let idx: Vec<usize> = (0..len).map(|i| phase + i * stride).collect();
    let freq = Frequency::new(series.freq.unit, series.freq.multiple.saturating_mul(stride as u32))?;
    let mut out = series.window(phase, 1)?;
    out.values = idx.iter().map(|&i| series.values[i]).collect();
    out.mask = idx.iter().map(|&i| series.mask[i]).collect();
    out.freq = freq;
    Ok(out)
}

// --------------------------------------------------------------- batches

#[derive(Clone, Debug)]
pub enum SourceData {
    Generator { source: Source, settings: Box<GeneratorSettings> },
    Pool(Vec<TimeSeries>),
}

#[derive(Clone, Debug)]
pub struct TrainSource {
    pub name: String,
    pub data: SourceData,
}

impl TrainSource {
    pub fn generator(source: Source) -> Self {
        Self {
            name: source.name().to_string(),
            data: SourceData::Generator {
                source,
                settings: Box::default(),
            },
        }
    }

    pub fn pool(name: impl Into<String>, series: Vec<TimeSeries>) -> Self {
        Self {
            name: name.into(),
            data: SourceData::Pool(series),
        }
    }
}

/// One composed (micro-)batch.
#[derive(Clone, Debug)]
pub struct ComposedBatch {
    pub batch: TokenBatch,
    /// Scaled future values; missing entries are NaN.
    pub targets: Vec<Vec<f64>>,
    pub scalers: Vec<Scaler>,
    pub provenance: Vec<String>,
}

fn source_weights(sources: &[TrainSource], cfg: &TrainConfig) -> Vec<f64> {
    sources.iter().map(|s| cfg.mixture.get(&s.name).copied().unwrap_or(1.0)).collect()
}

const TRAIN_FREQS: [FreqUnit; 6] = [
    FreqUnit::Minutes,
    FreqUnit::Hours,
    FreqUnit::Days,
    FreqUnit::Weeks,
    FreqUnit::Months,
    FreqUnit::Quarters,
];

fn draw_series<R: Rng + ?Sized>(src: &TrainSource, rng: &mut R, st: &Structure) -> Result<TimeSeries> {
    match &src.data {
        SourceData::Generator { source, settings } => {
            let freq = Frequency::of(TRAIN_FREQS[rng.random_range(0..TRAIN_FREQS.len())]);
            let mut out = generators::generate(*source, rng, st.total_len, freq, settings)?;
            let i = rng.random_range(0..out.len());
            Ok(out.swap_remove(i))
        }
        SourceData::Pool(pool) => {
            if pool.is_empty() {
                return Err(Error::InvalidInput(format!("source pool '{}' is empty", src.name)));
            }
            let s = &pool[rng.random_range(0..pool.len())];
            shorten(s, st.total_len, st.mode, rng)
        }
    }
}

struct Slot {
    tokens: SeqTokens,
    target: Vec<f64>,
    scaler: Scaler,
    provenance: String,
}

fn compose_slot<R: Rng + ?Sized>(sources: &[TrainSource], weights: &[f64], rng: &mut R, cfg: &TrainConfig) -> Result<Slot> {
    let mut last_err = None;
    for _ in 0..20 {
        let si = weighted_index(rng, weights);
        let mut st = sample_structure(rng, cfg);
        let series = match draw_series(&sources[si], rng, &st) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        if series.len() < 2 {
            continue;
        }
        if series.len() < st.total_len {
            st.total_len = series.len();
            st.horizon = sample_horizon(rng, st.total_len, cfg.horizon_range);
            st.history_len = st.total_len - st.horizon;
        }
        let history = series.window(0, st.history_len)?;
        let kind = if rng.random::<f64>() < cfg.scaler_aug_prob {
            ScalerKind::ALTERNATIVES[rng.random_range(0..ScalerKind::ALTERNATIVES.len())]
        } else {
            ScalerKind::Robust
        };
        let scaler = match Scaler::fit_series(kind, &history) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut scaled = scaler.apply(&history);
        if rng.random::<f64>() < cfg.nan_aug.prob {
            let rate = uniform(rng, 0.0, cfg.nan_aug.max_point_rate);
            scaled = nan_inject(&scaled, rng, rate, cfg.nan_aug.block_rate, cfg.nan_aug.block_mean_len, None)?.series;
        }
        let target = (st.history_len..st.total_len)
            .map(|t| if series.mask[t] { scaler.apply_value(series.values[t]) } else { f64::NAN })
            .collect();
        let tokens = SeqTokens::from_history(&scaled, st.horizon)?;
        return Ok(Slot {
            tokens,
            target,
            scaler,
            provenance: format!("{}:{}", sources[si].name, series.provenance),
        });
    }
    Err(last_err.unwrap_or(Error::RetryExhausted {
        what: "batch slot",
        attempts: 20,
    }))
}

/// Fills `size` slots: source by mixture weight, structure sampling, scaler
/// choice, history-only missing values.
pub fn compose_batch<R: Rng + ?Sized>(sources: &[TrainSource], rng: &mut R, cfg: &TrainConfig, size: usize) -> Result<ComposedBatch> {
    if sources.is_empty() {
        return Err(Error::InvalidInput("no training sources".into()));
    }
    let weights = source_weights(sources, cfg);
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("all mixture weights are zero".into()));
    }
    let mut out = ComposedBatch {
        batch: TokenBatch::default(),
        targets: Vec::with_capacity(size),
        scalers: Vec::with_capacity(size),
        provenance: Vec::with_capacity(size),
    };
    for _ in 0..size {
        let s = compose_slot(sources, &weights, rng, cfg)?;
        out.batch.seqs.push(s.tokens);
        out.targets.push(s.target);
        out.scalers.push(s.scaler);
        out.provenance.push(s.provenance);
    }
    Ok(out)
}

/// Mean pinball loss over valid `(sequence, step, quantile)` entries.
/// Entries are valid when the mask (if given) is set and the target finite.
pub fn quantile_loss(preds: &[Mat], targets: &[Vec<f64>], quantiles: &[f64], mask: Option<&[Vec<bool>]>) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::InvalidInput("prediction and target counts differ".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.rows != t.len() || p.cols != quantiles.len() {
            return Err(Error::InvalidInput(format!("shape mismatch in sequence {i}")));
        }
        for (r, y) in t.iter().enumerate() {
            let valid = y.is_finite() && mask.is_none_or(|m| m[i][r]);
            if valid {
                for (j, q) in quantiles.iter().enumerate() {
                    sum += pinball(*q, *y, p.data[r * p.cols + j]);
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("no valid entries for the quantile loss".into()));
    }
    Ok(sum / n as f64)
}

// -------------------------------------------------------------- optimizer

pub fn warmup_steps(total: usize, cfg: &TrainConfig) -> usize {
    (cfg.warmup_ratio * total as f64).round() as usize
}

/// Learning rate after `step` of `total` optimizer steps.
pub fn lr_at(step: usize, total: usize, cfg: &TrainConfig) -> f64 {
    let peak = cfg.peak_lr;
    let min = cfg.min_lr_ratio * peak;
    let warm = warmup_steps(total, cfg);
    if step < warm {
        return peak * step as f64 / warm as f64;
    }
    if total <= warm {
        return peak;
    }
    let cosine = |p: f64| min + (peak - min) * 0.5 * (1.0 + (std::f64::consts::PI * p.clamp(0.0, 1.0)).cos());
    let decay_len = (total - warm) as f64;
    let since = (step - warm) as f64;
    match cfg.schedule {
        ScheduleKind::Cosine => cosine(since / decay_len),
        ScheduleKind::WarmupStableDecay => {
            let stable = (cfg.stable_ratio * total as f64).round().min(decay_len);
            if since <= stable {
                peak
            } else if decay_len > stable {
                cosine((since - stable) / (decay_len - stable))
            } else {
                min
            }
        }
        ScheduleKind::CosineWithRestarts => {
            let cycles = cfg.restarts.max(1) as f64;
            let cycle = decay_len / cycles;
            if since >= decay_len {
                return min;
            }
            let within = since - (since / cycle).floor() * cycle;
            cosine(within / cycle)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Parameters,
    pub v: Parameters,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &Parameters) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Scales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Parameters, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Global-norm clipping followed by AdamW with bias correction and
/// decoupled weight decay. Returns the pre-clip gradient norm.
pub fn adamw_step(params: &mut Parameters, grads: &mut Parameters, state: &mut OptimizerState, lr: f64, cfg: &TrainConfig) -> Result<f64> {
    let norm = clip_global_norm(grads, cfg.grad_clip);
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient norm".into()));
    }
    state.step += 1;
    let (b1, b2) = cfg.betas;
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let gs: Vec<Vec<f64>> = grads.named().into_iter().map(|(_, m)| m.data.clone()).collect();
    for ((((p, m), v), g), name) in params
        .tensors_mut()
        .into_iter()
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
        .zip(&gs)
        .zip(&names)
    {
        let wd = if decays(name) { cfg.weight_decay } else { 0.0 };
        for i in 0..p.data.len() {
            let gi = g[i];
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
            let update = (m.data[i] / bc1) / ((v.data[i] / bc2).sqrt() + cfg.adam_eps);
            p.data[i] -= lr * (update + wd * p.data[i]);
        }
        if p.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {name} after update")));
        }
    }
    Ok(norm)
}

// ----------------------------------------------------------- trainer state

const STATE_MAGIC: &[u8; 8] = b"TSWTRN1\0";

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Full-precision model and optimizer state for exact resume.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub model: Model,
    pub opt: OptimizerState,
}

impl TrainerState {
    pub fn new(model: Model) -> Self {
        let opt = OptimizerState::new(&model.params);
        Self { model, opt }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&self.opt.step.to_le_bytes());
        let cfg = serde_json::to_vec(&self.model.config)?;
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        for p in [&self.model.params, &self.opt.m, &self.opt.v] {
            for (_, m) in p.named() {
                for v in &m.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let sum = fnv(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::Checkpoint(format!("trainer state: {m}"));
        if bytes.len() < 28 || &bytes[..8] != STATE_MAGIC {
            return Err(err("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(err("checksum mismatch"));
        }
        let step = u64::from_le_bytes(body[8..16].try_into().unwrap());
        let n = u32::from_le_bytes(body[16..20].try_into().unwrap()) as usize;
        let cfg_end = 20 + n;
        if cfg_end > body.len() {
            return Err(err("truncated config"));
        }
        let config: ModelConfig = serde_json::from_slice(&body[20..cfg_end])?;
        let mut model = Model::new(config, 0)?;
        let mut opt = OptimizerState::new(&model.params);
        let mut pos = cfg_end;
        for p in [&mut model.params, &mut opt.m, &mut opt.v] {
            for t in p.tensors_mut() {
                let need = t.data.len() * 8;
                if pos + need > body.len() {
                    return Err(err("truncated tensors"));
                }
                for (v, c) in t.data.iter_mut().zip(body[pos..pos + need].chunks_exact(8)) {
                    *v = f64::from_le_bytes(c.try_into().unwrap());
                }
                pos += need;
            }
        }
        if pos != body.len() {
            return Err(err("trailing bytes"));
        }
        opt.step = step;
        Ok(Self { model, opt })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

// ---------------------------------------------------------------- training

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Mean of the first `n` and last `n` losses.
pub fn loss_endpoints(trace: &[TraceRow], n: usize) -> (f64, f64) {
    let n = n.clamp(1, trace.len().max(1));
    let mean = |rows: &[TraceRow]| rows.iter().map(|r| r.loss).sum::<f64>() / rows.len().max(1) as f64;
    (mean(&trace[..n.min(trace.len())]), mean(&trace[trace.len().saturating_sub(n)..]))
}

pub fn trace_csv(trace: &[TraceRow], every: usize) -> String {
    let mut s = String::from("step,lr,loss\n");
    let every = every.max(1);
    for (i, r) in trace.iter().enumerate() {
        if r.step % every == 0 || i + 1 == trace.len() {
            let _ = writeln!(s, "{},{},{}", r.step, r.lr, r.loss);
        }
    }
    s
}

fn checkpoint_paths(dir: &Path, step: u64) -> (PathBuf, PathBuf) {
    (dir.join(format!("checkpoint_{step:08}.bin")), dir.join(format!("trainer_{step:08}.state")))
}

fn write_snapshot(state: &TrainerState, dir: &Path) -> Result<PathBuf> {
    let (ck, st) = checkpoint_paths(dir, state.opt.step);
    save_checkpoint(&state.model, &ck)?;
    state.save(&st)?;
    Ok(ck)
}

fn step_batch(sources: &[TrainSource], cfg: &TrainConfig, seed_value: u64, step: usize) -> Result<Vec<ComposedBatch>> {
    (0..cfg.accumulation)
        .map(|i| {
            let mut rng = seed::rng_for(seed_value, "train-batch", (step * cfg.accumulation + i) as u64);
            compose_batch(sources, &mut rng, cfg, cfg.batch_size)
        })
        .collect()
}

fn optimize_step(state: &mut TrainerState, micro: &[ComposedBatch], lr: f64, cfg: &TrainConfig, step: usize) -> Result<f64> {
    let mut total = state.model.params.zeros_like();
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    for b in micro {
        let g = gradient_sum(&state.model, &b.batch, &b.targets)?;
        loss_sum += g.loss_sum;
        count += g.count;
        total.add_assign(&g.grads);
    }
    if count == 0 {
        return Err(Error::InvalidInput(format!("step {step}: batch has no valid targets")));
    }
    let loss = loss_sum / count as f64;
    if !loss.is_finite() {
        let prov: Vec<&str> = micro.iter().flat_map(|b| b.provenance.iter().map(String::as_str)).collect();
        return Err(Error::NonFinite(format!("loss at step {step} (batch: {})", prov.join("; "))));
    }
    total.scale(1.0 / count as f64);
    check_grads(&total)?;
    adamw_step(&mut state.model.params, &mut total, &mut state.opt, lr, cfg)?;
    Ok(loss)
}

/// Runs optimizer steps from `state.opt.step` up to `cfg.iterations`.
/// Batches are derived from `(seed, step)`, so a resumed run replays the
/// uninterrupted one exactly. With `out_dir`, snapshots are written every
/// `checkpoint_every` steps and at the end, along with `loss.csv`.
pub fn train(state: &mut TrainerState, sources: &[TrainSource], cfg: &TrainConfig, seed_value: u64, out_dir: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    state.model.config.validate()?;
    if sources.is_empty() {
        return Err(Error::InvalidInput("no training sources".into()));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let start = state.opt.step as usize;
    let total = cfg.iterations;
    let mut report = TrainReport {
        trace: Vec::new(),
        checkpoints: Vec::new(),
    };
    let mut run_step = |state: &mut TrainerState, step: usize, micro: Vec<ComposedBatch>| -> Result<()> {
        let lr = lr_at(step + 1, total, cfg);
        let loss = optimize_step(state, &micro, lr, cfg, step + 1)?;
        report.trace.push(TraceRow { step: step + 1, lr, loss });
        if let (Some(dir), true) = (out_dir, cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < total) {
            report.checkpoints.push(write_snapshot(state, dir)?);
        }
        Ok(())
    };
    if cfg.prefetch && start < total {
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = sync_channel::<Result<Vec<ComposedBatch>>>(1);
            scope.spawn(move || {
                for step in start..total {
                    if tx.send(step_batch(sources, cfg, seed_value, step)).is_err() {
                        break;
                    }
                }
            });
            for step in start..total {
                let micro = rx.recv().map_err(|_| Error::InvalidInput("batch producer stopped".into()))??;
                run_step(state, step, micro)?;
            }
            Ok(())
        })?;
    } else {
        for step in start..total {
            let micro = step_batch(sources, cfg, seed_value, step)?;
            run_step(state, step, micro)?;
        }
    }
    if let Some(dir) = out_dir {
        report.checkpoints.push(write_snapshot(state, dir)?);
        let csv = trace_csv(&report.trace, cfg.log_every);
        let p = dir.join("loss.csv");
        fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::GeneratorKind;
    use crate::model::network::tests::toy_batch;
    use crate::model::network::gradients;
    use proptest::prelude::*;

    fn sine_pool(n: usize, len: usize) -> Vec<TimeSeries> {
        (0..n)
            .map(|i| {
                let p = 6.0 + i as f64;
                TimeSeries::from_values((0..len).map(|t| (2.0 * std::f64::consts::PI * t as f64 / p).sin()).collect(), Frequency::DAILY).unwrap()
            })
            .collect()
    }

    #[test]
    fn structure_frequencies() {
        let cfg = TrainConfig::default();
        let mut rng = seed::rng(1);
        let n = 100_000;
        let mut hits = 0;
        let mut cuts = 0;
        for _ in 0..n {
            let s = sample_structure(&mut rng, &cfg);
            assert!(s.horizon >= 1 && s.history_len >= 1 && s.horizon <= s.total_len / 2);
            hits += (s.total_len == 2048) as usize;
            cuts += (s.mode == ShortenMode::Cut) as usize;
        }
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
        assert!((cuts as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn shorten_modes() {
        let s = TimeSeries::from_values((0..100).map(|v| v as f64).collect(), Frequency::DAILY).unwrap();
        let mut rng = seed::rng(2);
        let c = shorten(&s, 30, ShortenMode::Cut, &mut rng).unwrap();
        assert!(c.values.windows(2).all(|w| w[1] - w[0] == 1.0));
        let d = shorten(&s, 30, ShortenMode::Subsample, &mut rng).unwrap();
        assert_eq!(d.len(), 30);
        assert!(d.values.windows(2).all(|w| w[1] - w[0] == 3.0));
        assert_eq!(d.freq.multiple, 3);
    }

    #[test]
    fn batch_composition_contracts() {
        let cfg = TrainConfig {
            length_distribution: [(64, 1.0)].into_iter().collect(),
            horizon_range: (4, 16),
            scaler_aug_prob: 0.0,
            ..Default::default()
        };
        let sources = vec![TrainSource::pool("sines", sine_pool(3, 200))];
        let b = compose_batch(&sources, &mut seed::rng(3), &cfg, 16).unwrap();
        assert!(b.scalers.iter().all(|s| s.kind == ScalerKind::Robust));
        assert!(b.provenance.iter().all(|p| p.starts_with("sines:")));
        for (s, t) in b.batch.seqs.iter().zip(&b.targets) {
            assert_eq!(s.len(), 64);
            assert_eq!(t.len(), s.horizon);
        }

        let sources = vec![TrainSource::pool("a", sine_pool(2, 80)), TrainSource::pool("b", sine_pool(2, 80))];
        let mut cfg2 = cfg.clone();
        cfg2.mixture = [("a".to_string(), 2.0), ("b".to_string(), 1.0)].into_iter().collect();
        cfg2.nan_aug.prob = 0.0;
        let b = compose_batch(&sources, &mut seed::rng(4), &cfg2, 30_000).unwrap();
        let fa = b.provenance.iter().filter(|p| p.starts_with("a:")).count() as f64 / 30_000.0;
        assert!((fa - 2.0 / 3.0).abs() < 0.02, "{fa}");
    }

    #[test]
    fn generator_sources_compose() {
        let cfg = TrainConfig {
            length_distribution: [(48, 1.0)].into_iter().collect(),
            horizon_range: (1, 12),
            ..Default::default()
        };
        let sources: Vec<TrainSource> = [Source::Generator(GeneratorKind::SineWave), Source::Sde, Source::Generator(GeneratorKind::CauKer)]
            .into_iter()
            .map(TrainSource::generator)
            .collect();
        let a = compose_batch(&sources, &mut seed::rng(5), &cfg, 8).unwrap();
        let b = compose_batch(&sources, &mut seed::rng(5), &cfg, 8).unwrap();
        assert_eq!(a.batch, b.batch);
    }

    #[test]
    fn loss_examples() {
        let q = [0.5];
        let p = vec![Mat::from_vec(1, 1, vec![0.0])];
        assert_eq!(quantile_loss(&p, &[vec![1.0]], &q, None).unwrap(), 0.5);
        assert_eq!(quantile_loss(&p, &[vec![0.0]], &q, None).unwrap(), 0.0);
        assert!((quantile_loss(&p, &[vec![1.0]], &[0.9], None).unwrap() - 0.9).abs() < 1e-15);
        let p1 = vec![Mat::from_vec(1, 1, vec![1.0])];
        assert!((quantile_loss(&p1, &[vec![0.0]], &[0.9], None).unwrap() - 0.1).abs() < 1e-15);
        assert!(quantile_loss(&p, &[vec![f64::NAN]], &q, None).is_err());
        assert!(quantile_loss(&p, &[vec![1.0]], &q, Some(&[vec![false]])).is_err());
    }

    #[test]
    fn loss_ignores_padding_and_order() {
        let model = Model::new(ModelConfig::toy(16, 1, 2, 1), 1).unwrap();
        let (batch, targets) = toy_batch(1, &[(12, 4), (6, 2), (9, 3)], 0.1);
        let (l1, _) = gradients(&model, &batch, &targets).unwrap();
        let rb = TokenBatch::new(batch.seqs.iter().rev().cloned().collect());
        let rt: Vec<Vec<f64>> = targets.iter().rev().cloned().collect();
        let (l2, _) = gradients(&model, &rb, &rt).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
    }

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig::default();
        let total = 2000;
        let warm = warmup_steps(total, &cfg);
        assert_eq!(warm, 6);
        assert_eq!(lr_at(0, total, &cfg), 0.0);
        assert_eq!(lr_at(warm, total, &cfg), cfg.peak_lr);
        assert!((lr_at(total, total, &cfg) - 0.01 * cfg.peak_lr).abs() < 1e-18);
        let mut prev = 0.0;
        for s in 0..=total {
            let lr = lr_at(s, total, &cfg);
            if s <= warm {
                assert!(lr >= prev);
            } else {
                assert!(lr <= prev + 1e-18);
            }
            prev = lr;
        }
        for kind in [ScheduleKind::WarmupStableDecay, ScheduleKind::CosineWithRestarts] {
            let c = TrainConfig { schedule: kind, ..TrainConfig::default() };
            assert_eq!(lr_at(warm, total, &c), c.peak_lr);
            assert!((lr_at(total, total, &c) - 0.01 * c.peak_lr).abs() < 1e-12);
        }
    }

    fn scalar_params(v: f64) -> Parameters {
        let mut p = Model::new(ModelConfig::toy(4, 1, 1, 1), 0).unwrap().params;
        for t in p.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = v);
        }
        p
    }

    #[test]
    fn adam_contracts() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = scalar_params(0.5);
        let orig = p.clone();
        let mut st = OptimizerState::new(&p);
        let mut g = scalar_params(0.0);
        adamw_step(&mut p, &mut g, &mut st, 1e-3, &cfg).unwrap();
        assert_eq!(p, orig);

        // Scalar Adam oracle: with constant g the bias-corrected ratio tends to 1.
        let mut st = OptimizerState::new(&p);
        let lr = 1e-3;
        let mut last = 0.0;
        for _ in 0..200 {
            let before = p.head_bias.data[0];
            let mut g = scalar_params(0.3);
            // Clip does not bind: norm well below 100.
            adamw_step(&mut p, &mut g, &mut st, lr, &cfg).unwrap();
            last = (before - p.head_bias.data[0]).abs();
        }
        let m_hat = 0.3;
        let v_hat = 0.09;
        assert!((last - lr * m_hat / (v_hat as f64).sqrt()).abs() / lr < 0.01, "{last}");

        let mut g = scalar_params(1.0);
        let n = g.global_norm();
        g.scale(200.0 / n);
        let pre = clip_global_norm(&mut g, 100.0);
        assert!((pre - 200.0).abs() < 1e-9);
        assert!((g.global_norm() - 100.0).abs() < 1e-9);
    }

    fn toy_setup() -> (TrainConfig, Vec<TrainSource>, Model) {
        let cfg = TrainConfig {
            iterations: 6,
            batch_size: 4,
            peak_lr: 1e-3,
            length_distribution: [(40, 1.0)].into_iter().collect(),
            horizon_range: (4, 8),
            log_every: 1,
            checkpoint_every: 3,
            ..Default::default()
        };
        let sources = vec![TrainSource::pool("sines", sine_pool(4, 120))];
        let model = Model::new(ModelConfig { conv_kernel: 4, ..ModelConfig::toy(16, 1, 2, 1) }, 9).unwrap();
        (cfg, sources, model)
    }

    #[test]
    fn zero_iterations_write_initial_checkpoint() {
        let (mut cfg, sources, model) = toy_setup();
        cfg.iterations = 0;
        let dir = tempfile::tempdir().unwrap();
        let mut st = TrainerState::new(model);
        let r = train(&mut st, &sources, &cfg, 1, Some(dir.path())).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.checkpoints.len(), 1);
        assert!(dir.path().join("checkpoint_00000000.bin").exists());
    }

    #[test]
    fn resume_replays_trace() {
        let (cfg, sources, model) = toy_setup();
        let dir = tempfile::tempdir().unwrap();
        let mut full = TrainerState::new(model.clone());
        let r = train(&mut full, &sources, &cfg, 7, Some(dir.path())).unwrap();
        let mid = TrainerState::load(&dir.path().join("trainer_00000003.state")).unwrap();
        let mut resumed = mid;
        let tail = train(&mut resumed, &sources, &cfg, 7, None).unwrap();
        assert_eq!(&r.trace[3..], &tail.trace[..]);
        assert_eq!(resumed, full);

        let mut serial = TrainerState::new(model);
        let c = TrainConfig { prefetch: false, ..cfg };
        let r2 = train(&mut serial, &sources, &c, 7, None).unwrap();
        assert_eq!(r.trace, r2.trace);
    }

    #[test]
    fn trainer_state_round_trip() {
        let (_, _, model) = toy_setup();
        let st = TrainerState::new(model);
        let b = st.encode().unwrap();
        assert_eq!(TrainerState::decode(&b).unwrap(), st);
        let mut c = b.clone();
        c[30] ^= 4;
        assert!(TrainerState::decode(&c).is_err());
    }

    proptest! {
        #[test]
        fn horizon_bounds(seed_value in 0u64..10_000) {
            let cfg = TrainConfig { length_distribution: [(3, 0.5), (9, 0.5)].into_iter().collect(), ..Default::default() };
            let s = sample_structure(&mut seed::rng(seed_value), &cfg);
            prop_assert!(s.horizon >= 1 && s.history_len >= 1);
            prop_assert_eq!(s.history_len + s.horizon, s.total_len);
        }
    }
}
