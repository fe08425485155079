//! Row-wise building blocks with explicit backward passes.

use super::tensor::Mat;

pub const NORM_EPS: f64 = 1e-6;
pub const L2_EPS: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// RMS normalization per row with gain `g`. Returns output and the
/// per-row inverse rms.
pub fn rmsnorm(x: &Mat, g: &[f64]) -> (Mat, Vec<f64>) {
    let d = x.cols;
    let mut y = Mat::zeros(x.rows, d);
    let mut inv = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let ms = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
        let s = 1.0 / (ms + NORM_EPS).sqrt();
        inv.push(s);
        for ((o, v), gi) in y.row_mut(r).iter_mut().zip(row).zip(g) {
            *o = v * s * gi;
        }
    }
    (y, inv)
}

/// Backward of `rmsnorm`; accumulates into `dg` and returns `dx`.
pub fn rmsnorm_backward(x: &Mat, g: &[f64], inv: &[f64], dy: &Mat, dg: &mut [f64]) -> Mat {
    let d = x.cols;
    let mut dx = Mat::zeros(x.rows, d);
    for r in 0..x.rows {
        let row = x.row(r);
        let dyr = dy.row(r);
        let s = inv[r];
        let mut dot = 0.0;
        for i in 0..d {
            dg[i] += dyr[i] * row[i] * s;
            dot += dyr[i] * g[i] * row[i];
        }
        let c = s * s * s * dot / d as f64;
        for (i, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = s * dyr[i] * g[i] - c * row[i];
        }
    }
    dx
}

/// Kernel rearranged tap-major (`klen x channels`) so inner loops run over
/// contiguous channels.
fn taps_major(kernel: &Mat) -> Vec<f64> {
    let (ch, kl) = (kernel.rows, kernel.cols);
    let mut kt = vec![0.0; ch * kl];
    for c in 0..ch {
        for tap in 0..kl {
            kt[tap * ch + c] = kernel.data[c * kl + tap];
        }
    }
    kt
}

/// Causal depthwise convolution. `kernel` is `channels x klen`; tap
/// `klen - 1` multiplies the current position, tap `klen - 1 - s` the input
/// `s` steps back. Zero left padding.
pub fn causal_conv(x: &Mat, kernel: &Mat) -> Mat {
    let (t_len, ch, kl) = (x.rows, x.cols, kernel.cols);
    let kt = taps_major(kernel);
    let mut y = Mat::zeros(t_len, ch);
    for t in 0..t_len {
        let yr = &mut y.data[t * ch..(t + 1) * ch];
        for s in 0..kl.min(t + 1) {
            let xr = &x.data[(t - s) * ch..(t - s + 1) * ch];
            let kr = &kt[(kl - 1 - s) * ch..(kl - s) * ch];
            for ((o, k), v) in yr.iter_mut().zip(kr).zip(xr) {
                *o += k * v;
            }
        }
    }
    y
}

pub fn causal_conv_backward(x: &Mat, kernel: &Mat, dy: &Mat, dk: &mut Mat) -> Mat {
    let (t_len, ch, kl) = (x.rows, x.cols, kernel.cols);
    let kt = taps_major(kernel);
    let mut dkt = vec![0.0; ch * kl];
    let mut dx = Mat::zeros(t_len, ch);
    for t in 0..t_len {
        let dyr = &dy.data[t * ch..(t + 1) * ch];
        for s in 0..kl.min(t + 1) {
            let tap = kl - 1 - s;
            let base = (t - s) * ch;
            let xr = &x.data[base..base + ch];
            for ((g, d), v) in dkt[tap * ch..(tap + 1) * ch].iter_mut().zip(dyr).zip(xr) {
                *g += d * v;
            }
            for ((o, d), k) in dx.data[base..base + ch].iter_mut().zip(dyr).zip(&kt[tap * ch..(tap + 1) * ch]) {
                *o += d * k;
            }
        }
    }
    for c in 0..ch {
        for tap in 0..kl {
            dk.data[c * kl + tap] += dkt[tap * ch + c];
        }
    }
    dx
}

/// `v / sqrt(|v|^2 + eps)`; returns the output and `1 / sqrt(|v|^2 + eps)`.
pub fn l2norm(v: &[f64]) -> (Vec<f64>, f64) {
    let s = 1.0 / (v.iter().map(|x| x * x).sum::<f64>() + L2_EPS).sqrt();
    (v.iter().map(|x| x * s).collect(), s)
}

/// Gradient of `l2norm` given the normalized output `y`, its scale and `dy`.
pub fn l2norm_backward(y: &[f64], s: f64, dy: &[f64], dx: &mut [f64]) {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((o, yi), dyi) in dx.iter_mut().zip(y).zip(dy) {
        *o = s * (dyi - yi * dot);
    }
}
