//! Gated DeltaProduct recurrence for one head: sequential and chunkwise
//! forward passes plus a checkpointed reverse pass.
//!
//! State `H` is `dk x dv`, row-major. Per token: `H <- alpha H`, then for
//! each of the `n_h` substeps `H <- (I - beta k k^T) H + beta k v^T`, and
//! the output is `o = H^T q`.

use num_traits::Float;

/// Inputs for one head over `len` tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadInputs<F> {
    pub len: usize,
    pub dk: usize,
    pub dv: usize,
    pub nh: usize,
    /// `len x dk`
    pub q: Vec<F>,
    /// `len x nh x dk`, unit rows
    pub k: Vec<F>,
    /// `len x nh x dv`
    pub v: Vec<F>,
    /// `len x nh`
    pub beta: Vec<F>,
    /// `len`, each `<= 0`
    pub log_alpha: Vec<F>,
}

impl<F: Float> HeadInputs<F> {
    #[inline]
    fn key(&self, t: usize, j: usize) -> &[F] {
        let o = (t * self.nh + j) * self.dk;
        &self.k[o..o + self.dk]
    }

    #[inline]
    fn value(&self, t: usize, j: usize) -> &[F] {
        let o = (t * self.nh + j) * self.dv;
        &self.v[o..o + self.dv]
    }

    #[inline]
    fn query(&self, t: usize) -> &[F] {
        &self.q[t * self.dk..(t + 1) * self.dk]
    }

    pub fn cast<G: Float>(&self) -> HeadInputs<G> {
        let c = |v: &Vec<F>| v.iter().map(|x| G::from(*x).unwrap()).collect();
        HeadInputs {
            len: self.len,
            dk: self.dk,
            dv: self.dv,
            nh: self.nh,
            q: c(&self.q),
            k: c(&self.k),
            v: c(&self.v),
            beta: c(&self.beta),
            log_alpha: c(&self.log_alpha),
        }
    }
}

/// `H' = (I - beta k k^T) H + beta k v^T` in place.
pub fn householder_step<F: Float>(h: &mut [F], dk: usize, dv: usize, k: &[F], v: &[F], beta: F) {
    if beta == F::zero() {
        return;
    }
    let mut buf = [F::zero(); 128];
    let mut heap;
    let u: &mut [F] = if dv <= buf.len() {
        &mut buf[..dv]
    } else {
        heap = vec![F::zero(); dv];
        &mut heap
    };
    for i in 0..dk {
        let ki = k[i];
        for (uj, hij) in u.iter_mut().zip(&h[i * dv..(i + 1) * dv]) {
            *uj = *uj + ki * *hij;
        }
    }
    for (uj, vj) in u.iter_mut().zip(v) {
        *uj = beta * (*vj - *uj);
    }
    for i in 0..dk {
        let ki = k[i];
        for (hij, uj) in h[i * dv..(i + 1) * dv].iter_mut().zip(u.iter()) {
            *hij = *hij + ki * *uj;
        }
    }
}

fn gate<F: Float>(h: &mut [F], log_alpha: F) {
    if log_alpha != F::zero() {
        let a = log_alpha.exp();
        h.iter_mut().for_each(|x| *x = *x * a);
    }
}

fn read_out<F: Float>(h: &[F], dk: usize, dv: usize, q: &[F], out: &mut [F]) {
    out.iter_mut().for_each(|x| *x = F::zero());
    for i in 0..dk {
        let qi = q[i];
        for (o, hij) in out.iter_mut().zip(&h[i * dv..(i + 1) * dv]) {
            *o = *o + qi * *hij;
        }
    }
}

fn advance<F: Float>(inp: &HeadInputs<F>, h: &mut [F], t: usize) {
    gate(h, inp.log_alpha[t]);
    for j in 0..inp.nh {
        householder_step(h, inp.dk, inp.dv, inp.key(t, j), inp.value(t, j), inp.beta[t * inp.nh + j]);
    }
}

/// Token-by-token recurrence. Returns outputs (`len x dv`) and the final
/// state.
pub fn recurrence_sequential<F: Float>(inp: &HeadInputs<F>, h0: &[F]) -> (Vec<F>, Vec<F>) {
    let (dk, dv) = (inp.dk, inp.dv);
    let mut h = h0.to_vec();
    let mut out = vec![F::zero(); inp.len * dv];
    for t in 0..inp.len {
        advance(inp, &mut h, t);
        read_out(&h, dk, dv, inp.query(t), &mut out[t * dv..(t + 1) * dv]);
    }
    (out, h)
}

/// Chunkwise form. Inside a chunk the gated Householder products are
/// folded into a unit-lower-triangular solve (WY form); only the state at
/// chunk boundaries is materialized.
pub fn recurrence_chunkwise<F: Float>(inp: &HeadInputs<F>, h0: &[F], chunk_len: usize) -> (Vec<F>, Vec<F>) {
    let (dk, dv, nh) = (inp.dk, inp.dv, inp.nh);
    let chunk_len = chunk_len.max(1);
    let mut h = h0.to_vec();
    let mut out = vec![F::zero(); inp.len * dv];
    let dot = |a: &[F], b: &[F]| a.iter().zip(b).fold(F::zero(), |s, (x, y)| s + *x * *y);

    let mut t0 = 0;
    while t0 < inp.len {
        let t1 = (t0 + chunk_len).min(inp.len);
        let s_len = (t1 - t0) * nh;
        // Cumulative log gate after each substep.
        let mut g = vec![F::zero(); s_len];
        let mut acc = F::zero();
        for s in 0..s_len {
            if s % nh == 0 {
                acc = acc + inp.log_alpha[t0 + s / nh];
            }
            g[s] = acc;
        }
        let key = |s: usize| inp.key(t0 + s / nh, s % nh);
        let beta = |s: usize| inp.beta[(t0 + s / nh) * nh + s % nh];

        // L[s][p] = beta_s exp(g_s - g_p) k_s.k_p for p < s
        let mut l = vec![F::zero(); s_len * s_len];
        for s in 0..s_len {
            for p in 0..s {
                l[s * s_len + p] = beta(s) * (g[s] - g[p]).exp() * dot(key(s), key(p));
            }
        }
        // (I + L) W = beta V ; (I + L) Y = beta e^g K
        let mut w = vec![F::zero(); s_len * dv];
        let mut y = vec![F::zero(); s_len * dk];
        for s in 0..s_len {
            let b = beta(s);
            let vs = inp.value(t0 + s / nh, s % nh);
            let eg = b * g[s].exp();
            let ks = key(s);
            for c in 0..dv {
                w[s * dv + c] = b * vs[c];
            }
            for c in 0..dk {
                y[s * dk + c] = eg * ks[c];
            }
            for p in 0..s {
                let lsp = l[s * s_len + p];
                if lsp != F::zero() {
                    for c in 0..dv {
                        w[s * dv + c] = w[s * dv + c] - lsp * w[p * dv + c];
                    }
                    for c in 0..dk {
                        y[s * dk + c] = y[s * dk + c] - lsp * y[p * dk + c];
                    }
                }
            }
        }
        // u_s = w_s - H0^T y_s
        let mut u = w;
        for s in 0..s_len {
            for i in 0..dk {
                let ysi = y[s * dk + i];
                for c in 0..dv {
                    u[s * dv + c] = u[s * dv + c] - ysi * h[i * dv + c];
                }
            }
        }
        // Outputs at the last substep of each token.
        let mut tmp = vec![F::zero(); dv];
        for t in t0..t1 {
            let last = (t - t0) * nh + nh - 1;
            let q = inp.query(t);
            read_out(&h, dk, dv, q, &mut tmp);
            let eg = g[last].exp();
            let o = &mut out[t * dv..(t + 1) * dv];
            for c in 0..dv {
                o[c] = eg * tmp[c];
            }
            for r in 0..=last {
                let coef = (g[last] - g[r]).exp() * dot(key(r), q);
                for c in 0..dv {
                    o[c] = o[c] + coef * u[r * dv + c];
                }
            }
        }
        // Boundary state.
        let last = s_len - 1;
        let eg = g[last].exp();
        h.iter_mut().for_each(|x| *x = *x * eg);
        for r in 0..s_len {
            let decay = (g[last] - g[r]).exp();
            let kr = key(r);
            for i in 0..dk {
                let a = decay * kr[i];
                for c in 0..dv {
                    h[i * dv + c] = h[i * dv + c] + a * u[r * dv + c];
                }
            }
        }
        t0 = t1;
    }
    (out, h)
}

/// Forward pass state kept for the reverse pass: the state at the start of
/// every `every`-th token.
#[derive(Clone, Debug)]
pub struct Checkpoints {
    pub every: usize,
    pub states: Vec<Vec<f64>>,
}

/// Sequential forward that also records checkpoints for `recurrence_backward`.
pub fn recurrence_forward_cached(inp: &HeadInputs<f64>, h0: &[f64], every: usize) -> (Vec<f64>, Vec<f64>, Checkpoints) {
    let (dk, dv) = (inp.dk, inp.dv);
    let every = every.max(1);
    let mut h = h0.to_vec();
    let mut out = vec![0.0; inp.len * dv];
    let mut states = Vec::with_capacity(inp.len / every + 1);
    for t in 0..inp.len {
        if t % every == 0 {
            states.push(h.clone());
        }
        advance(inp, &mut h, t);
        read_out(&h, dk, dv, inp.query(t), &mut out[t * dv..(t + 1) * dv]);
    }
    (out, h, Checkpoints { every, states })
}

/// Gradients of one head's recurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_alpha: Vec<f64>,
    pub h0: Vec<f64>,
}

/// Dot product with eight interleaved partial sums (fixed order).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Reverse pass given output gradients `d_out` (`len x dv`) and the final
/// state gradient. Intermediate states are recomputed from checkpoints one
/// segment at a time.
pub fn recurrence_backward(inp: &HeadInputs<f64>, ck: &Checkpoints, d_out: &[f64], d_final: &[f64]) -> HeadGrads {
    let (dk, dv, nh, n) = (inp.dk, inp.dv, inp.nh, inp.len);
    let sz = dk * dv;
    let mut g = HeadGrads {
        q: vec![0.0; n * dk],
        k: vec![0.0; n * nh * dk],
        v: vec![0.0; n * nh * dv],
        beta: vec![0.0; n * nh],
        log_alpha: vec![0.0; n],
        h0: vec![0.0; sz],
    };
    let mut dh = d_final.to_vec();
    let mut w = vec![0.0; dv];
    let mut vu = vec![0.0; dv];
    let mut u = vec![0.0; dv];
    let span = nh + 2;
    // states[(t - a) * span + m]: m = 0 pre-gate, 1 post-gate, 1 + j after substep j
    let mut st = vec![0.0; ck.every.min(n.max(1)) * span * sz];
    for seg in (0..ck.states.len()).rev() {
        let a = seg * ck.every;
        let b = ((seg + 1) * ck.every).min(n);
        st[..sz].copy_from_slice(&ck.states[seg]);
        for t in a..b {
            let base = (t - a) * span * sz;
            if t > a {
                st.copy_within(base - sz..base, base);
            }
            let (done, rest) = st.split_at_mut(base + sz);
            let pre = &done[base..];
            let alpha = inp.log_alpha[t].exp();
            for (o, x) in rest[..sz].iter_mut().zip(pre) {
                *o = alpha * x;
            }
            for j in 0..nh {
                let (prev, next) = rest.split_at_mut((j + 1) * sz);
                let next = &mut next[..sz];
                next.copy_from_slice(&prev[j * sz..]);
                householder_step(next, dk, dv, inp.key(t, j), inp.value(t, j), inp.beta[t * nh + j]);
            }
        }
        for t in (a..b).rev() {
            let base = (t - a) * span * sz;
            let h_out = &st[base + (nh + 1) * sz..base + (nh + 2) * sz];
            let q = inp.query(t);
            let d_o = &d_out[t * dv..(t + 1) * dv];
            // o = H^T q
            for (i, (dr, hr)) in dh.chunks_exact_mut(dv).zip(h_out.chunks_exact(dv)).enumerate() {
                let qi = q[i];
                g.q[t * dk + i] = dot(hr, d_o);
                for (d, o) in dr.iter_mut().zip(d_o) {
                    *d += qi * o;
                }
            }
            for j in (0..nh).rev() {
                let x = &st[base + (1 + j) * sz..base + (2 + j) * sz];
                let k = inp.key(t, j);
                let v = inp.value(t, j);
                let beta = inp.beta[t * nh + j];
                w.iter_mut().for_each(|e| *e = 0.0);
                u.iter_mut().for_each(|e| *e = 0.0);
                for ((dr, xr), ki) in dh.chunks_exact(dv).zip(x.chunks_exact(dv)).zip(k) {
                    for (((wc, uc), d), xv) in w.iter_mut().zip(u.iter_mut()).zip(dr).zip(xr) {
                        *wc += ki * d;
                        *uc += ki * xv;
                    }
                }
                for ((o, a), b) in vu.iter_mut().zip(v).zip(&u) {
                    *o = a - b;
                }
                g.beta[t * nh + j] = dot(&w, &vu);
                for (gv, wc) in g.v[(t * nh + j) * dv..(t * nh + j + 1) * dv].iter_mut().zip(&w) {
                    *gv = beta * wc;
                }
                let gk = &mut g.k[(t * nh + j) * dk..(t * nh + j + 1) * dk];
                for (((gki, dr), xr), ki) in gk.iter_mut().zip(dh.chunks_exact_mut(dv)).zip(x.chunks_exact(dv)).zip(k) {
                    *gki = beta * (dot(dr, &vu) - dot(xr, &w));
                    let a = beta * ki;
                    for (d, wc) in dr.iter_mut().zip(&w) {
                        *d -= a * wc;
                    }
                }
            }
            let alpha = inp.log_alpha[t].exp();
            let pre = &st[base..base + sz];
            let da = dot(&dh, pre);
            dh.iter_mut().for_each(|d| *d *= alpha);
            g.log_alpha[t] = alpha * da;
        }
    }
    g.h0 = dh;
    g
}
