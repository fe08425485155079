//! Forward pass, inference and reverse-mode gradients of the forecaster.

use rayon::prelude::*;

use super::batch::{SeqTokens, TokenBatch};
use super::layers::{
    causal_conv, causal_conv_backward, l2norm, l2norm_backward, rmsnorm, rmsnorm_backward, sigmoid,
    softplus,
};
use super::recurrence::{
    recurrence_backward, recurrence_chunkwise, recurrence_forward_cached, recurrence_sequential, Checkpoints, HeadInputs,
};
use super::tensor::{linear, linear_backward, Mat};
use super::{LayerParams, ModelConfig, Parameters, TIME_SLOTS};
use crate::error::{Error, Result};
use crate::timeseries::{Scaler, ScalerKind, TimeSeries};

const CHECKPOINT_EVERY: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = Parameters::init(&config, seed)?;
        Ok(Self { config, params })
    }

    /// Quantile forecast in the original scale: robust scaling of the
    /// history, one forward pass, inversion and crossing repair.
    pub fn predict(&self, history: &TimeSeries, horizon: usize) -> Result<Forecast> {
        let scaler = Scaler::fit_series(ScalerKind::Robust, history)?;
        let tokens = SeqTokens::from_history(&scaler.apply(history), horizon)?;
        let raw = forward(self, &TokenBatch::new(vec![tokens]))?.pop().expect("one sequence");
        Ok(Forecast::from_scaled(&self.config.quantiles, raw, &scaler))
    }
}

/// Per-step quantile values in the data scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub quantiles: Vec<f64>,
    /// `horizon` rows of `quantiles.len()` values, non-decreasing per row.
    pub values: Vec<Vec<f64>>,
    /// Rows whose raw head outputs crossed and were sorted.
    pub crossings_repaired: usize,
}

impl Forecast {
    pub fn from_scaled(quantiles: &[f64], raw: Mat, scaler: &Scaler) -> Self {
        let mut crossings = 0;
        let values = (0..raw.rows)
            .map(|r| {
                let mut row: Vec<f64> = raw.row(r).iter().map(|z| scaler.invert_value(*z)).collect();
                if row.windows(2).any(|w| w[0] > w[1]) {
                    crossings += 1;
                    row.sort_by(|a, b| a.total_cmp(b));
                }
                row
            })
            .collect();
        Self {
            quantiles: quantiles.to_vec(),
            values,
            crossings_repaired: crossings,
        }
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// The 0.5 quantile, or the level nearest to it.
    pub fn median(&self) -> Vec<f64> {
        let j = self
            .quantiles
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
            .map_or(0, |(j, _)| j);
        self.values.iter().map(|r| r[j]).collect()
    }
}

fn embed(p: &Parameters, s: &SeqTokens) -> Mat {
    let t_len = s.len();
    let feats = Mat::from_vec(t_len, TIME_SLOTS, s.features.clone());
    let mut e = linear(&feats, &p.time_proj);
    for t in 0..s.history_len {
        let row = e.row_mut(t);
        if s.mask[t] {
            let y = s.values[t];
            for (o, w) in row.iter_mut().zip(&p.value_proj.data) {
                *o += w * y;
            }
        } else {
            for (o, w) in row.iter_mut().zip(&p.nan_embedding.data) {
                *o += w;
            }
        }
    }
    e
}

fn embed_backward(p: &Parameters, s: &SeqTokens, de: &Mat, g: &mut Parameters) {
    let feats = Mat::from_vec(s.len(), TIME_SLOTS, s.features.clone());
    let _ = linear_backward(&feats, &p.time_proj, de, &mut g.time_proj);
    for t in 0..s.history_len {
        let row = de.row(t);
        if s.mask[t] {
            let y = s.values[t];
            for (gw, d) in g.value_proj.data.iter_mut().zip(row) {
                *gw += d * y;
            }
        } else {
            for (gw, d) in g.nan_embedding.data.iter_mut().zip(row) {
                *gw += d;
            }
        }
    }
}

struct Gates {
    beta_logit: Vec<f64>,
    gate_logit: Vec<f64>,
}

struct LayerCache {
    x: Mat,
    n1: Mat,
    inv1: Vec<f64>,
    p: Mat,
    c: Mat,
    /// Sigmoid of `c`.
    c_sig: Vec<f64>,
    bg: Mat,
    heads: Vec<HeadInputs<f64>>,
    /// Per head: l2 scales of queries (`len`) and keys (`len x nh`).
    q_scale: Vec<Vec<f64>>,
    k_scale: Vec<Vec<f64>>,
    ckpts: Vec<Checkpoints>,
    o: Mat,
    x1: Mat,
    n2: Mat,
    inv2: Vec<f64>,
    mm: Mat,
    /// Sigmoid of the gate half of `mm`.
    mm_sig: Vec<f64>,
    act: Mat,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Infer,
    Train,
}

/// Splits conv activations into per-head recurrence inputs.
fn head_inputs(cfg: &ModelConfig, a: &Mat, bg: &Mat, h: usize) -> (HeadInputs<f64>, Vec<f64>, Vec<f64>, Gates) {
    let (d, nh, dh, heads) = (cfg.embed_dim, cfg.householders, cfg.head_dim(), cfg.heads);
    let t_len = a.rows;
    let mut inp = HeadInputs {
        len: t_len,
        dk: dh,
        dv: dh,
        nh,
        q: Vec::with_capacity(t_len * dh),
        k: Vec::with_capacity(t_len * nh * dh),
        v: Vec::with_capacity(t_len * nh * dh),
        beta: Vec::with_capacity(t_len * nh),
        log_alpha: Vec::with_capacity(t_len),
    };
    let mut qs = Vec::with_capacity(t_len);
    let mut ks = Vec::with_capacity(t_len * nh);
    let mut gates = Gates {
        beta_logit: Vec::with_capacity(t_len * nh),
        gate_logit: Vec::with_capacity(t_len),
    };
    let scale = cfg.beta_scale();
    for t in 0..t_len {
        let row = a.row(t);
        let (q, s) = l2norm(&row[h * dh..(h + 1) * dh]);
        inp.q.extend(q);
        qs.push(s);
        for j in 0..nh {
            let o = d + j * d + h * dh;
            let (k, s) = l2norm(&row[o..o + dh]);
            inp.k.extend(k);
            ks.push(s);
        }
        for j in 0..nh {
            let o = (1 + nh) * d + j * d + h * dh;
            inp.v.extend_from_slice(&row[o..o + dh]);
        }
        let br = bg.row(t);
        for j in 0..nh {
            let z = br[h * nh + j];
            gates.beta_logit.push(z);
            inp.beta.push(scale * sigmoid(z));
        }
        let z = br[heads * nh + h];
        gates.gate_logit.push(z);
        inp.log_alpha.push(-softplus(z));
    }
    (inp, qs, ks, gates)
}

fn layer_forward(
    cfg: &ModelConfig,
    lp: &LayerParams,
    x: Mat,
    h0: &[Vec<f64>],
    mode: Mode,
) -> (Mat, Vec<Vec<f64>>, Option<LayerCache>) {
    let (d, dh) = (cfg.embed_dim, cfg.head_dim());
    let t_len = x.rows;
    let (n1, inv1) = rmsnorm(&x, &lp.norm1.data);
    let p = linear(&n1, &lp.qkv);
    let c = causal_conv(&p, &lp.conv);
    let c_sig: Vec<f64> = c.data.iter().map(|v| sigmoid(*v)).collect();
    let a = Mat::from_vec(c.rows, c.cols, c.data.iter().zip(&c_sig).map(|(v, s)| v * s).collect());
    let mut bg = linear(&n1, &lp.beta_gate);
    for t in 0..t_len {
        for (o, b) in bg.row_mut(t).iter_mut().zip(&lp.beta_gate_bias.data) {
            *o += b;
        }
    }
    let mut o = Mat::zeros(t_len, d);
    let mut finals = Vec::with_capacity(cfg.heads);
    let mut heads = Vec::new();
    let mut q_scale = Vec::new();
    let mut k_scale = Vec::new();
    let mut ckpts = Vec::new();
    for h in 0..cfg.heads {
        let (inp, qs, ks, _) = head_inputs(cfg, &a, &bg, h);
        let (out, fin) = match mode {
            Mode::Train => {
                let (out, fin, ck) = recurrence_forward_cached(&inp, &h0[h], CHECKPOINT_EVERY);
                ckpts.push(ck);
                (out, fin)
            }
            Mode::Infer if cfg.chunk_len > 0 => recurrence_chunkwise(&inp, &h0[h], cfg.chunk_len),
            Mode::Infer => recurrence_sequential(&inp, &h0[h]),
        };
        for t in 0..t_len {
            o.row_mut(t)[h * dh..(h + 1) * dh].copy_from_slice(&out[t * dh..(t + 1) * dh]);
        }
        finals.push(fin);
        if mode == Mode::Train {
            heads.push(inp);
            q_scale.push(qs);
            k_scale.push(ks);
        }
    }
    let mut x1 = linear(&o, &lp.out);
    x1.add_assign(&x);
    let (n2, inv2) = rmsnorm(&x1, &lp.norm2.data);
    let mm = linear(&n2, &lp.mlp_in);
    let m = cfg.mlp_width();
    let mut act = Mat::zeros(t_len, m);
    let mut mm_sig = vec![0.0; t_len * m];
    for t in 0..t_len {
        let r = mm.row(t);
        let sg = &mut mm_sig[t * m..(t + 1) * m];
        for (i, o) in act.row_mut(t).iter_mut().enumerate() {
            sg[i] = sigmoid(r[i]);
            *o = r[i] * sg[i] * r[m + i];
        }
    }
    let mut x2 = linear(&act, &lp.mlp_out);
    x2.add_assign(&x1);
    let cache = (mode == Mode::Train).then(|| LayerCache {
        x,
        n1,
        inv1,
        p,
        c,
        c_sig,
        bg,
        heads,
        q_scale,
        k_scale,
        ckpts,
        o,
        x1,
        n2,
        inv2,
        mm,
        mm_sig,
        act,
    });
    (x2, finals, cache)
}

fn layer_backward(
    cfg: &ModelConfig,
    lp: &LayerParams,
    cache: &LayerCache,
    dx2: &Mat,
    d_final: &[Vec<f64>],
    g: &mut LayerParams,
) -> (Mat, Vec<Vec<f64>>) {
    let (d, nh, dh, heads) = (cfg.embed_dim, cfg.householders, cfg.head_dim(), cfg.heads);
    let m = cfg.mlp_width();
    let t_len = dx2.rows;
    // Gated MLP.
    let dact = linear_backward(&cache.act, &lp.mlp_out, dx2, &mut g.mlp_out);
    let mut dmm = Mat::zeros(t_len, 2 * m);
    for t in 0..t_len {
        let r = cache.mm.row(t);
        let sg = &cache.mm_sig[t * m..(t + 1) * m];
        let da = dact.row(t);
        let out = dmm.row_mut(t);
        for i in 0..m {
            out[i] = da[i] * r[m + i] * sg[i] * (1.0 + r[i] * (1.0 - sg[i]));
            out[m + i] = da[i] * r[i] * sg[i];
        }
    }
    let dn2 = linear_backward(&cache.n2, &lp.mlp_in, &dmm, &mut g.mlp_in);
    let mut dx1 = rmsnorm_backward(&cache.x1, &lp.norm2.data, &cache.inv2, &dn2, &mut g.norm2.data);
    dx1.add_assign(dx2);
    // Token mix.
    let d_o = linear_backward(&cache.o, &lp.out, &dx1, &mut g.out);
    let mut da = Mat::zeros(t_len, cfg.conv_channels());
    let mut dbg = Mat::zeros(t_len, cfg.beta_gate_width());
    let mut dh0 = Vec::with_capacity(heads);
    let scale = cfg.beta_scale();
    let mut tmp = vec![0.0; dh];
    for h in 0..heads {
        let inp = &cache.heads[h];
        let mut dout = vec![0.0; t_len * dh];
        for t in 0..t_len {
            dout[t * dh..(t + 1) * dh].copy_from_slice(&d_o.row(t)[h * dh..(h + 1) * dh]);
        }
        let hg = recurrence_backward(inp, &cache.ckpts[h], &dout, &d_final[h]);
        for t in 0..t_len {
            let row = da.row_mut(t);
            l2norm_backward(
                &inp.q[t * dh..(t + 1) * dh],
                cache.q_scale[h][t],
                &hg.q[t * dh..(t + 1) * dh],
                &mut tmp,
            );
            row[h * dh..(h + 1) * dh].copy_from_slice(&tmp);
            for j in 0..nh {
                let kk = (t * nh + j) * dh;
                l2norm_backward(&inp.k[kk..kk + dh], cache.k_scale[h][t * nh + j], &hg.k[kk..kk + dh], &mut tmp);
                let o = d + j * d + h * dh;
                row[o..o + dh].copy_from_slice(&tmp);
                let o = (1 + nh) * d + j * d + h * dh;
                row[o..o + dh].copy_from_slice(&hg.v[kk..kk + dh]);
            }
            let bgr = cache.bg.row(t);
            let dr = dbg.row_mut(t);
            for j in 0..nh {
                let s = sigmoid(bgr[h * nh + j]);
                dr[h * nh + j] = hg.beta[t * nh + j] * scale * s * (1.0 - s);
            }
            let z = bgr[heads * nh + h];
            dr[heads * nh + h] = -hg.log_alpha[t] * sigmoid(z);
        }
        dh0.push(hg.h0);
    }
    let mut dc = da;
    for ((v, c), s) in dc.data.iter_mut().zip(&cache.c.data).zip(&cache.c_sig) {
        *v *= s * (1.0 + c * (1.0 - s));
    }
    let dp = causal_conv_backward(&cache.p, &lp.conv, &dc, &mut g.conv);
    let mut dn1 = linear_backward(&cache.n1, &lp.qkv, &dp, &mut g.qkv);
    dn1.add_assign(&linear_backward(&cache.n1, &lp.beta_gate, &dbg, &mut g.beta_gate));
    for t in 0..t_len {
        for (b, v) in g.beta_gate_bias.data.iter_mut().zip(dbg.row(t)) {
            *b += v;
        }
    }
    let mut dx = rmsnorm_backward(&cache.x, &lp.norm1.data, &cache.inv1, &dn1, &mut g.norm1.data);
    dx.add_assign(&dx1);
    (dx, dh0)
}

fn initial_states(cfg: &ModelConfig, lp: &LayerParams, prev: Option<&Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    (0..cfg.heads)
        .map(|h| {
            let mut s = lp.h0.row(h).to_vec();
            if let (true, Some(prev)) = (cfg.state_weaving, prev) {
                for (a, b) in s.iter_mut().zip(&prev[h]) {
                    *a += b;
                }
            }
            s
        })
        .collect()
}

fn head_output(p: &Parameters, x: &Mat, history_len: usize) -> (Mat, Mat, Vec<f64>, Mat) {
    let (nf, inv) = rmsnorm(x, &p.final_norm.data);
    let fut = Mat::from_vec(
        x.rows - history_len,
        x.cols,
        nf.data[history_len * x.cols..].to_vec(),
    );
    let mut y = linear(&fut, &p.head);
    for r in 0..y.rows {
        for (o, b) in y.row_mut(r).iter_mut().zip(&p.head_bias.data) {
            *o += b;
        }
    }
    (y, fut, inv, nf)
}

/// Per-layer outputs of one sequence, used by inference and tests.
pub struct Trace {
    pub layer_outputs: Vec<Mat>,
    pub final_states: Vec<Vec<Vec<f64>>>,
    pub predictions: Mat,
}

pub fn forward_sequence(model: &Model, s: &SeqTokens) -> Trace {
    let cfg = &model.config;
    let mut x = embed(&model.params, s);
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut layer_outputs = Vec::with_capacity(cfg.layers);
    let mut final_states = Vec::with_capacity(cfg.layers);
    for lp in &model.params.layers {
        let h0 = initial_states(cfg, lp, prev.as_ref());
        let (y, fin, _) = layer_forward(cfg, lp, x, &h0, Mode::Infer);
        layer_outputs.push(y.clone());
        final_states.push(fin.clone());
        prev = Some(fin);
        x = y;
    }
    let (predictions, ..) = head_output(&model.params, &x, s.history_len);
    Trace {
        layer_outputs,
        final_states,
        predictions,
    }
}

/// Quantile predictions in the scaled domain, `horizon x |Q|` per sequence.
pub fn forward(model: &Model, batch: &TokenBatch) -> Result<Vec<Mat>> {
    model.config.validate()?;
    Ok(batch
        .seqs
        .par_iter()
        .map(|s| forward_sequence(model, s).predictions)
        .collect())
}

/// `rho_q(e) = max(q e, (q - 1) e)` with `e = y - y_hat`.
#[inline]
pub fn pinball(q: f64, y: f64, y_hat: f64) -> f64 {
    let e = y - y_hat;
    (q * e).max((q - 1.0) * e)
}

/// Derivative of `pinball` with respect to `y_hat`; the `q` branch is used
/// at zero residual.
#[inline]
pub fn pinball_grad(q: f64, y: f64, y_hat: f64) -> f64 {
    if y - y_hat >= 0.0 {
        -q
    } else {
        1.0 - q
    }
}

/// Unnormalized loss sum, valid entry count and gradient of the loss sum.
pub struct GradSum {
    pub loss_sum: f64,
    pub count: usize,
    pub grads: Parameters,
}

fn sequence_gradient(model: &Model, s: &SeqTokens, target: &[f64]) -> GradSum {
    let cfg = &model.config;
    let p = &model.params;
    let mut g = p.zeros_like();
    let mut x = embed(p, s);
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut caches = Vec::with_capacity(cfg.layers);
    for lp in &p.layers {
        let h0 = initial_states(cfg, lp, prev.as_ref());
        let (y, fin, cache) = layer_forward(cfg, lp, x, &h0, Mode::Train);
        caches.push(cache.expect("train cache"));
        prev = Some(fin);
        x = y;
    }
    let (pred, fut, inv, _) = head_output(p, &x, s.history_len);
    let mut loss_sum = 0.0;
    let mut count = 0;
    let mut dpred = Mat::zeros(pred.rows, pred.cols);
    for (r, y) in target.iter().enumerate().take(pred.rows) {
        if !y.is_finite() {
            continue;
        }
        for (j, q) in cfg.quantiles.iter().enumerate() {
            let yh = pred.data[r * pred.cols + j];
            loss_sum += pinball(*q, *y, yh);
            dpred.data[r * pred.cols + j] = pinball_grad(*q, *y, yh);
            count += 1;
        }
    }
    for r in 0..dpred.rows {
        for (b, v) in g.head_bias.data.iter_mut().zip(dpred.row(r)) {
            *b += v;
        }
    }
    let dfut = linear_backward(&fut, &p.head, &dpred, &mut g.head);
    let mut dnf = Mat::zeros(x.rows, x.cols);
    dnf.data[s.history_len * x.cols..].copy_from_slice(&dfut.data);
    let mut dx = rmsnorm_backward(&x, &p.final_norm.data, &inv, &dnf, &mut g.final_norm.data);
    let zero_state = vec![vec![0.0; cfg.head_dim() * cfg.head_dim()]; cfg.heads];
    let mut d_final = zero_state;
    for (i, cache) in caches.iter().enumerate().rev() {
        let (dprev, dh0) = layer_backward(cfg, &p.layers[i], cache, &dx, &d_final, &mut g.layers[i]);
        for (h, s) in dh0.iter().enumerate() {
            for (a, b) in g.layers[i].h0.row_mut(h).iter_mut().zip(s) {
                *a += b;
            }
        }
        d_final = if cfg.state_weaving {
            dh0
        } else {
            vec![vec![0.0; cfg.head_dim() * cfg.head_dim()]; cfg.heads]
        };
        dx = dprev;
    }
    embed_backward(p, s, &dx, &mut g);
    GradSum {
        loss_sum,
        count,
        grads: g,
    }
}

/// Summed pinball loss and its gradient over a batch. Non-finite targets
/// are excluded. Per-sequence results are combined in batch order.
pub fn gradient_sum(model: &Model, batch: &TokenBatch, targets: &[Vec<f64>]) -> Result<GradSum> {
    if targets.len() != batch.len() {
        return Err(Error::InvalidInput("target count differs from batch size".into()));
    }
    for (s, t) in batch.seqs.iter().zip(targets) {
        if t.len() != s.horizon {
            return Err(Error::InvalidInput("target length differs from horizon".into()));
        }
    }
    let parts: Vec<GradSum> = batch
        .seqs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(s, t)| sequence_gradient(model, s, t))
        .collect();
    let mut total = GradSum {
        loss_sum: 0.0,
        count: 0,
        grads: model.params.zeros_like(),
    };
    for p in parts {
        total.loss_sum += p.loss_sum;
        total.count += p.count;
        total.grads.add_assign(&p.grads);
    }
    Ok(total)
}

/// Mean quantile loss and its exact gradient for every parameter.
pub fn gradients(model: &Model, batch: &TokenBatch, targets: &[Vec<f64>]) -> Result<(f64, Parameters)> {
    let mut s = gradient_sum(model, batch, targets)?;
    if s.count == 0 {
        return Err(Error::InvalidInput("no valid target entries".into()));
    }
    let n = s.count as f64;
    s.grads.scale(1.0 / n);
    check_grads(&s.grads)?;
    Ok((s.loss_sum / n, s.grads))
}

pub fn check_grads(g: &Parameters) -> Result<()> {
    for (name, m) in g.named() {
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    Ok(())
}

/// Mean quantile loss without gradients.
pub fn loss(model: &Model, batch: &TokenBatch, targets: &[Vec<f64>]) -> Result<f64> {
    let preds = forward(model, batch)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        for (r, y) in t.iter().enumerate() {
            if y.is_finite() {
                for (j, q) in model.config.quantiles.iter().enumerate() {
                    sum += pinball(*q, *y, p.data[r * p.cols + j]);
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("no valid target entries".into()));
    }
    Ok(sum / n as f64)
}
