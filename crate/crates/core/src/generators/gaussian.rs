//! Gaussian-process based generators: KernelSynth, GP with periodic spikes,
//! and the CauKer structural causal model.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gp::{
    sample_composite_kernel, sample_gp, unit_grid, CompositeKernel, PeriodDistribution, JITTER_START,
};
use crate::sampling::{standard_normal, uniform};
use crate::stats;
use crate::timeseries::{Frequency, TimeSeries};

/// Periodic, RBF, RationalQuadratic and White only.
pub const KERNEL_SYNTH_BANK: [f64; 8] = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];

/// Zero mean, unit variance (centering only for constant input).
pub fn zscore(values: &[f64]) -> Vec<f64> {
    let m = stats::mean(values);
    let sd = stats::std_dev(values);
    let s = if sd > 1e-12 { sd } else { 1.0 };
    values.iter().map(|v| (v - m) / s).collect()
}

pub fn render_kernel_synth<R: Rng + ?Sized>(kernel: &CompositeKernel, length: usize, rng: &mut R) -> Result<Vec<f64>> {
    let path = sample_gp(kernel, &unit_grid(length), rng, JITTER_START)?;
    Ok(zscore(&path))
}

pub fn gen_kernel_synth<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    gen_kernel_synth_with(rng, length, freq, 5)
}

pub fn gen_kernel_synth_with<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    freq: Frequency,
    max_kernels: usize,
) -> Result<TimeSeries> {
    if length < 2 {
        return Err(Error::InvalidInput("kernel_synth needs length >= 2".into()));
    }
    let kernel = sample_composite_kernel(
        rng,
        &KERNEL_SYNTH_BANK,
        max_kernels,
        length,
        freq,
        &PeriodDistribution::default(),
    )?;
    let y = render_kernel_synth(&kernel, length, rng)?;
    Ok(TimeSeries::from_values(y, freq)?.with_provenance(format!("kernel_synth({kernel})")))
}

/// Spikes placed near multiples of `period` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSpikes {
    pub period: usize,
    pub jitter: usize,
    pub sign: f64,
    /// Magnitude in units of the path's standard deviation.
    pub magnitude: f64,
}

/// Adds spikes; returns the spiked path and the spike positions.
pub fn add_periodic_spikes<R: Rng + ?Sized>(path: &[f64], spikes: &PeriodicSpikes, rng: &mut R) -> (Vec<f64>, Vec<usize>) {
    let mut y = path.to_vec();
    let n = y.len();
    let sd = stats::std_dev(path).max(1e-6);
    let mut positions = Vec::new();
    if spikes.period == 0 || n == 0 {
        return (y, positions);
    }
    let mut k = 0usize;
    while k * spikes.period < n {
        let j = spikes.jitter as i64;
        let off = if j > 0 { rng.random_range(-j..=j) } else { 0 };
        let p = (k as i64 * spikes.period as i64 + off).clamp(0, n as i64 - 1) as usize;
        y[p] += spikes.sign * spikes.magnitude * sd * uniform(rng, 0.8, 1.2);
        positions.push(p);
        k += 1;
    }
    (y, positions)
}

pub fn gen_gp<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<TimeSeries> {
    gen_gp_with(rng, length, freq, &[1.0; 8], 6, 0.3)
}

pub fn gen_gp_with<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    freq: Frequency,
    bank: &[f64; 8],
    max_kernels: usize,
    spike_prob: f64,
) -> Result<TimeSeries> {
    if length < 2 {
        return Err(Error::InvalidInput("gp needs length >= 2".into()));
    }
    let kernel = sample_composite_kernel(rng, bank, max_kernels, length, freq, &PeriodDistribution::default())?;
    let path = sample_gp(&kernel, &unit_grid(length), rng, JITTER_START)?;
    let mut prov = format!("gp({kernel})");
    let y = match kernel.dominant_period() {
        Some(p) if rng.random::<f64>() < spike_prob => {
            let period = (p * length as f64).round().max(2.0) as usize;
            let spikes = PeriodicSpikes {
                period,
                jitter: period / 16,
                sign: if rng.random::<bool>() { 1.0 } else { -1.0 },
                magnitude: uniform(rng, 2.0, 4.0),
            };
            prov.push_str(&format!("+spikes(period={period})"));
            add_periodic_spikes(&path, &spikes, rng).0
        }
        _ => path,
    };
    Ok(TimeSeries::from_values(y, freq)?.with_provenance(prov))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Sin,
    Tanh,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Sin,
        Activation::Tanh,
        Activation::Identity,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Sin => x.sin(),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeanFunction {
    Zero,
    Constant(f64),
    Linear { intercept: f64, slope: f64 },
    Exponential { scale: f64, rate: f64 },
    Sine { amplitude: f64, period: f64, phase: f64 },
}

impl MeanFunction {
    /// Evaluated on unit time `u` in `[0, 1)`.
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(c) => c,
            MeanFunction::Linear { intercept, slope } => intercept + slope * u,
            MeanFunction::Exponential { scale, rate } => scale * (rate * u).exp(),
            MeanFunction::Sine {
                amplitude,
                period,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * u / period + phase).sin(),
        }
    }

    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        match rng.random_range(0..5) {
            0 => MeanFunction::Zero,
            1 => MeanFunction::Constant(uniform(rng, -1.0, 1.0)),
            2 => MeanFunction::Linear {
                intercept: uniform(rng, -1.0, 1.0),
                slope: uniform(rng, -2.0, 2.0),
            },
            3 => MeanFunction::Exponential {
                scale: uniform(rng, -1.0, 1.0),
                rate: uniform(rng, -2.0, 2.0),
            },
            _ => MeanFunction::Sine {
                amplitude: uniform(rng, 0.0, 1.0),
                period: uniform(rng, 0.05, 0.5),
                phase: uniform(rng, 0.0, 2.0 * std::f64::consts::PI),
            },
        }
    }
}

/// Node of the causal graph. Nodes without parents are GP roots; others
/// apply `activation(sum_p w_p x_p + bias)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScmNode {
    pub parents: Vec<(usize, f64)>,
    pub bias: f64,
    pub activation: Activation,
    pub kernel: CompositeKernel,
    pub mean: MeanFunction,
}

/// Nodes are stored in topological order: every parent index is smaller
/// than its child's.
#[derive(Clone, Debug, PartialEq)]
pub struct ScmGraph {
    pub nodes: Vec<ScmNode>,
    pub outputs: Vec<usize>,
}

pub const CAUKER_HIDDEN: usize = 7;
pub const CAUKER_CHANNELS: usize = 21;

impl ScmGraph {
    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.parents.iter().any(|(p, _)| *p >= i) {
                return Err(Error::InvalidInput(format!("node {i} has a non-topological parent")));
            }
        }
        if self.outputs.iter().any(|o| *o >= self.nodes.len()) {
            return Err(Error::InvalidInput("output refers to a missing node".into()));
        }
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.parents.len()).sum()
    }

    pub fn max_in_degree(&self) -> usize {
        self.nodes.iter().map(|n| n.parents.len()).max().unwrap_or(0)
    }

    /// 7 hidden nodes followed by 21 output nodes; each node draws
    /// `0..=min(max_parents, index)` distinct earlier parents.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency, max_parents: usize) -> Result<Self> {
        let total = CAUKER_HIDDEN + CAUKER_CHANNELS;
        let mut nodes = Vec::with_capacity(total);
        for i in 0..total {
            let k = rng.random_range(0..=max_parents.min(i));
            let mut pool: Vec<usize> = (0..i).collect();
            let mut parents = Vec::with_capacity(k);
            for _ in 0..k {
                let j = rng.random_range(0..pool.len());
                let p = pool.swap_remove(j);
                parents.push((p, standard_normal(rng)));
            }
            parents.sort_by_key(|(p, _)| *p);
            let kernel = sample_composite_kernel(rng, &[1.0; 8], 3, length, freq, &PeriodDistribution::default())?;
            nodes.push(ScmNode {
                parents,
                bias: 0.5 * standard_normal(rng),
                activation: Activation::ALL[rng.random_range(0..5)],
                kernel,
                mean: MeanFunction::sample(rng),
            });
        }
        Ok(Self {
            nodes,
            outputs: (CAUKER_HIDDEN..total).collect(),
        })
    }
}

/// Values of every node, in node order.
pub fn render_scm<R: Rng + ?Sized>(graph: &ScmGraph, length: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    graph.validate()?;
    let grid = unit_grid(length);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let v = if node.parents.is_empty() {
            let path = sample_gp(&node.kernel, &grid, rng, JITTER_START)?;
            path.iter().zip(&grid).map(|(p, u)| p + node.mean.eval(*u)).collect()
        } else {
            (0..length)
                .map(|t| {
                    let z: f64 = node.parents.iter().map(|(p, w)| w * values[*p][t]).sum::<f64>() + node.bias;
                    node.activation.apply(z)
                })
                .collect()
        };
        values.push(v);
    }
    Ok(values)
}

pub fn gen_cauker<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency) -> Result<Vec<TimeSeries>> {
    gen_cauker_with(rng, length, freq, 3)
}

pub fn gen_cauker_with<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    freq: Frequency,
    max_parents: usize,
) -> Result<Vec<TimeSeries>> {
    if length < 2 {
        return Err(Error::InvalidInput("cau_ker needs length >= 2".into()));
    }
    let graph = ScmGraph::sample(rng, length, freq, max_parents)?;
    let values = render_scm(&graph, length, rng)?;
    graph
        .outputs
        .iter()
        .enumerate()
        .map(|(c, &node)| {
            let prov = format!("cau_ker(channel={c},edges={})", graph.edge_count());
            Ok(TimeSeries::from_values(values[node].clone(), freq)?.with_provenance(prov))
        })
        .collect()
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}
