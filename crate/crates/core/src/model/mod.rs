//! Gated DeltaProduct quantile forecaster with state weaving.

pub mod batch;
pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod recurrence;
pub mod tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::standard_normal;
use crate::seed;
use crate::timeseries::TimeFeature;
use tensor::Mat;

pub use batch::{SeqTokens, TokenBatch};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use network::{forward, gradients, Forecast, Model};
pub use recurrence::{householder_step, recurrence_chunkwise, recurrence_sequential, HeadInputs};

/// Number of time-feature slots seen by the time projection.
pub const TIME_SLOTS: usize = TimeFeature::SLOTS.len();

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub householders: usize,
    pub conv_kernel: usize,
    pub allow_negative_eigenvalues: bool,
    pub state_weaving: bool,
    pub quantiles: Vec<f64>,
    /// Gated-MLP hidden width; `None` means `embed_dim`.
    pub mlp_dim: Option<usize>,
    /// Chunk length of the inference recurrence; 0 selects the sequential form.
    pub chunk_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 512,
            layers: 10,
            heads: 4,
            householders: 4,
            conv_kernel: 16,
            allow_negative_eigenvalues: true,
            state_weaving: true,
            quantiles: (1..=9).map(|i| i as f64 / 10.0).collect(),
            mlp_dim: None,
            chunk_len: 64,
        }
    }
}

impl ModelConfig {
    pub fn toy(embed_dim: usize, layers: usize, heads: usize, householders: usize) -> Self {
        Self {
            embed_dim,
            layers,
            heads,
            householders,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn mlp_width(&self) -> usize {
        self.mlp_dim.unwrap_or(self.embed_dim)
    }

    /// Channels passing through the short convolution: query, keys, values.
    pub fn conv_channels(&self) -> usize {
        (1 + 2 * self.householders) * self.embed_dim
    }

    pub fn beta_gate_width(&self) -> usize {
        (self.householders + 1) * self.heads
    }

    pub fn beta_scale(&self) -> f64 {
        if self.allow_negative_eigenvalues {
            2.0
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.layers == 0 || self.householders == 0 {
            return bad("layers and householders must be >= 1".into());
        }
        if !(1..=32).contains(&self.conv_kernel) {
            return bad(format!("conv_kernel {} outside [1, 32]", self.conv_kernel));
        }
        if self.quantiles.is_empty()
            || self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0))
            || self.quantiles.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("quantiles must be strictly increasing in (0, 1)".into());
        }
        if self.mlp_dim == Some(0) {
            return bad("mlp_dim must be positive".into());
        }
        Ok(())
    }
}

/// Learnable tensors of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub norm1: Mat,
    /// Fused query / key / value projection, `conv_channels x d`. Row blocks:
    /// query, then `n_h` key blocks, then `n_h` value blocks.
    pub qkv: Mat,
    /// Depthwise kernels, `conv_channels x conv_kernel`.
    pub conv: Mat,
    /// Beta logits (`heads x n_h`, head-major) followed by `heads` gate logits.
    pub beta_gate: Mat,
    pub beta_gate_bias: Mat,
    pub out: Mat,
    pub norm2: Mat,
    /// Fused gate and up projections, `2 * mlp x d`.
    pub mlp_in: Mat,
    pub mlp_out: Mat,
    /// Learnable initial state, `heads x dk x dv`.
    pub h0: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub value_proj: Mat,
    pub time_proj: Mat,
    pub nan_embedding: Mat,
    pub layers: Vec<LayerParams>,
    pub final_norm: Mat,
    pub head: Mat,
    pub head_bias: Mat,
}

fn normal_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| std * standard_normal(rng)).collect())
}

fn filled(rows: usize, cols: usize, v: f64) -> Mat {
    Mat::from_vec(rows, cols, vec![v; rows * cols])
}

impl Parameters {
    pub fn init(cfg: &ModelConfig, seed_value: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let m = cfg.mlp_width();
        let dh = cfg.head_dim();
        let depth = (2.0 * cfg.layers as f64).sqrt();
        let mut rng = seed::rng_for(seed_value, "model-init", 0);
        let rng = &mut rng;
        let value_proj = normal_mat(rng, 1, d, 1.0);
        let time_proj = normal_mat(rng, d, TIME_SLOTS, 1.0 / (TIME_SLOTS as f64).sqrt());
        let nan_embedding = normal_mat(rng, 1, d, 0.1);
        let gate_bias = (0.05f64.exp() - 1.0).ln();
        let layers = (0..cfg.layers)
            .map(|_| {
                let kb = 1.0 / (cfg.conv_kernel as f64).sqrt();
                let conv = Mat::from_vec(
                    cfg.conv_channels(),
                    cfg.conv_kernel,
                    (0..cfg.conv_channels() * cfg.conv_kernel).map(|_| rng.random_range(-kb..=kb)).collect(),
                );
                let mut bias = Mat::zeros(1, cfg.beta_gate_width());
                for h in 0..cfg.heads {
                    bias.data[cfg.heads * cfg.householders + h] = gate_bias;
                }
                LayerParams {
                    norm1: filled(1, d, 1.0),
                    qkv: normal_mat(rng, cfg.conv_channels(), d, 1.0 / (d as f64).sqrt()),
                    conv,
                    beta_gate: normal_mat(rng, cfg.beta_gate_width(), d, 1.0 / (d as f64).sqrt()),
                    beta_gate_bias: bias,
                    out: normal_mat(rng, d, d, 1.0 / (d as f64).sqrt() / depth),
                    norm2: filled(1, d, 1.0),
                    mlp_in: normal_mat(rng, 2 * m, d, 1.0 / (d as f64).sqrt()),
                    mlp_out: normal_mat(rng, d, m, 1.0 / (m as f64).sqrt() / depth),
                    h0: Mat::zeros(cfg.heads, dh * dh),
                }
            })
            .collect();
        let head = normal_mat(rng, cfg.quantiles.len(), d, 0.1 / (d as f64).sqrt());
        Ok(Self {
            value_proj,
            time_proj,
            nan_embedding,
            layers,
            final_norm: filled(1, d, 1.0),
            head,
            head_bias: Mat::zeros(1, cfg.quantiles.len()),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows, m.cols);
        Self {
            value_proj: z(&self.value_proj),
            time_proj: z(&self.time_proj),
            nan_embedding: z(&self.nan_embedding),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    norm1: z(&l.norm1),
                    qkv: z(&l.qkv),
                    conv: z(&l.conv),
                    beta_gate: z(&l.beta_gate),
                    beta_gate_bias: z(&l.beta_gate_bias),
                    out: z(&l.out),
                    norm2: z(&l.norm2),
                    mlp_in: z(&l.mlp_in),
                    mlp_out: z(&l.mlp_out),
                    h0: z(&l.h0),
                })
                .collect(),
            final_norm: z(&self.final_norm),
            head: z(&self.head),
            head_bias: z(&self.head_bias),
        }
    }

    /// Named tensors in a fixed order.
    pub fn named(&self) -> Vec<(String, &Mat)> {
        let mut v: Vec<(String, &Mat)> = vec![
            ("embed.value_proj".into(), &self.value_proj),
            ("embed.time_proj".into(), &self.time_proj),
            ("embed.nan_embedding".into(), &self.nan_embedding),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (n, m) in [
                ("norm1", &l.norm1),
                ("qkv", &l.qkv),
                ("conv", &l.conv),
                ("beta_gate", &l.beta_gate),
                ("beta_gate_bias", &l.beta_gate_bias),
                ("out", &l.out),
                ("norm2", &l.norm2),
                ("mlp_in", &l.mlp_in),
                ("mlp_out", &l.mlp_out),
                ("h0", &l.h0),
            ] {
                v.push((format!("layers.{i}.{n}"), m));
            }
        }
        v.push(("final_norm".into(), &self.final_norm));
        v.push(("head".into(), &self.head));
        v.push(("head_bias".into(), &self.head_bias));
        v
    }

    /// Mutable tensors in the same order as `named`.
    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v: Vec<&mut Mat> = vec![&mut self.value_proj, &mut self.time_proj, &mut self.nan_embedding];
        for l in &mut self.layers {
            v.extend([
                &mut l.norm1,
                &mut l.qkv,
                &mut l.conv,
                &mut l.beta_gate,
                &mut l.beta_gate_bias,
                &mut l.out,
                &mut l.norm2,
                &mut l.mlp_in,
                &mut l.mlp_out,
                &mut l.h0,
            ]);
        }
        v.extend([&mut self.final_norm, &mut self.head, &mut self.head_bias]);
        v
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, m)| m.data.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Parameters) {
        let o = other.named();
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(o) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.named()
            .iter()
            .flat_map(|(_, m)| m.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Closed-form parameter count for a configuration.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    let d = cfg.embed_dim;
    let m = cfg.mlp_width();
    let q = cfg.quantiles.len();
    let per_layer = 2 * d
        + cfg.conv_channels() * d
        + cfg.conv_channels() * cfg.conv_kernel
        + cfg.beta_gate_width() * (d + 1)
        + d * d
        + 3 * m * d
        + cfg.heads * cfg.head_dim() * cfg.head_dim();
    d + d * TIME_SLOTS + d + cfg.layers * per_layer + d + q * d + q
}

/// Whether decoupled weight decay applies to a named tensor.
pub fn decays(name: &str) -> bool {
    !(name.contains("norm") || name.ends_with("bias") || name.contains("nan_embedding") || name.ends_with("h0"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_agree() {
        for cfg in [ModelConfig::toy(32, 2, 2, 2), ModelConfig::toy(48, 3, 4, 1)] {
            let p = Parameters::init(&cfg, 1).unwrap();
            assert_eq!(p.count(), parameter_count(&cfg));
        }
    }

    #[test]
    fn default_count_near_reported_size() {
        let n = parameter_count(&ModelConfig::default()) as f64;
        assert!((n / 34.69e6 - 1.0).abs() < 0.10, "{n}");
    }

    #[test]
    fn validation() {
        assert!(ModelConfig { heads: 3, ..ModelConfig::toy(32, 1, 2, 1) }.validate().is_err());
        assert!(ModelConfig { quantiles: vec![0.5, 0.4], ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig { conv_kernel: 33, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::toy(16, 1, 2, 1);
        assert_eq!(Parameters::init(&cfg, 3).unwrap(), Parameters::init(&cfg, 3).unwrap());
        assert_ne!(Parameters::init(&cfg, 3).unwrap(), Parameters::init(&cfg, 4).unwrap());
    }

    #[test]
    fn decay_exclusions() {
        assert!(decays("layers.0.qkv"));
        assert!(!decays("layers.0.norm1"));
        assert!(!decays("head_bias"));
        assert!(!decays("layers.1.h0"));
        assert!(!decays("embed.nan_embedding"));
    }
}
