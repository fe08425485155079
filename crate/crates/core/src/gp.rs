//! Covariance kernels, composite kernel trees and Gaussian-process path
//! sampling.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sampling::{log_uniform, weighted_index};
use crate::timeseries::{FreqUnit, Frequency};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaseKernel {
    Rbf { lengthscale: f64 },
    RationalQuadratic { lengthscale: f64, alpha: f64 },
    Periodic { lengthscale: f64, period: f64 },
    White { variance: f64 },
    Linear { variance: f64, offset: f64 },
    /// `nu` is one of 0.5, 1.5, 2.5.
    Matern { lengthscale: f64, nu: f64 },
    Polynomial { degree: u32, variance: f64 },
    Constant { value: f64 },
}

/// Index into the kernel bank; order matches `BaseKernel` variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Rbf,
    RationalQuadratic,
    Periodic,
    White,
    Linear,
    Matern,
    Polynomial,
    Constant,
}

impl KernelKind {
    pub const ALL: [KernelKind; 8] = [
        KernelKind::Rbf,
        KernelKind::RationalQuadratic,
        KernelKind::Periodic,
        KernelKind::White,
        KernelKind::Linear,
        KernelKind::Matern,
        KernelKind::Polynomial,
        KernelKind::Constant,
    ];
}

impl BaseKernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            BaseKernel::Rbf { .. } => KernelKind::Rbf,
            BaseKernel::RationalQuadratic { .. } => KernelKind::RationalQuadratic,
            BaseKernel::Periodic { .. } => KernelKind::Periodic,
            BaseKernel::White { .. } => KernelKind::White,
            BaseKernel::Linear { .. } => KernelKind::Linear,
            BaseKernel::Matern { .. } => KernelKind::Matern,
            BaseKernel::Polynomial { .. } => KernelKind::Polynomial,
            BaseKernel::Constant { .. } => KernelKind::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("kernel {name} must be positive, got {v}")))
            }
        };
        match *self {
            BaseKernel::Rbf { lengthscale } => pos("lengthscale", lengthscale),
            BaseKernel::RationalQuadratic { lengthscale, alpha } => {
                pos("lengthscale", lengthscale)?;
                pos("alpha", alpha)
            }
            BaseKernel::Periodic { lengthscale, period } => {
                pos("lengthscale", lengthscale)?;
                pos("period", period)
            }
            BaseKernel::White { variance } => pos("variance", variance),
            BaseKernel::Linear { variance, .. } => pos("variance", variance),
            BaseKernel::Matern { lengthscale, nu } => {
                pos("lengthscale", lengthscale)?;
                if [0.5, 1.5, 2.5].contains(&nu) {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("Matern nu must be 0.5/1.5/2.5, got {nu}")))
                }
            }
            BaseKernel::Polynomial { degree, variance } => {
                if !(1..=4).contains(&degree) {
                    return Err(Error::InvalidInput(format!("polynomial degree {degree} not in 1..=4")));
                }
                pos("variance", variance)
            }
            BaseKernel::Constant { value } => pos("value", value),
        }
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let r = (a - b).abs();
        match *self {
            BaseKernel::Rbf { lengthscale } => (-0.5 * r * r / (lengthscale * lengthscale)).exp(),
            BaseKernel::RationalQuadratic { lengthscale, alpha } => {
                (1.0 + r * r / (2.0 * alpha * lengthscale * lengthscale)).powf(-alpha)
            }
            BaseKernel::Periodic { lengthscale, period } => {
                let s = (PI * r / period).sin();
                (-2.0 * s * s / (lengthscale * lengthscale)).exp()
            }
            BaseKernel::White { variance } => {
                if a == b {
                    variance
                } else {
                    0.0
                }
            }
            BaseKernel::Linear { variance, offset } => variance * (a - offset) * (b - offset),
            BaseKernel::Matern { lengthscale, nu } => {
                let d = r / lengthscale;
                if nu == 0.5 {
                    (-d).exp()
                } else if nu == 1.5 {
                    let s = 3f64.sqrt() * d;
                    (1.0 + s) * (-s).exp()
                } else {
                    let s = 5f64.sqrt() * d;
                    (1.0 + s + s * s / 3.0) * (-s).exp()
                }
            }
            BaseKernel::Polynomial { degree, variance } => {
                variance * (1.0 + a * b).powi(degree as i32)
            }
            BaseKernel::Constant { value } => value,
        }
    }
}

impl fmt::Display for BaseKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BaseKernel::Rbf { lengthscale } => write!(f, "RBF({lengthscale:.4})"),
            BaseKernel::RationalQuadratic { lengthscale, alpha } => {
                write!(f, "RQ({lengthscale:.4},{alpha:.4})")
            }
            BaseKernel::Periodic { lengthscale, period } => {
                write!(f, "Periodic({lengthscale:.4},{period:.4})")
            }
            BaseKernel::White { variance } => write!(f, "White({variance:.4})"),
            BaseKernel::Linear { variance, offset } => write!(f, "Linear({variance:.4},{offset:.4})"),
            BaseKernel::Matern { lengthscale, nu } => write!(f, "Matern({lengthscale:.4},{nu})"),
            BaseKernel::Polynomial { degree, variance } => write!(f, "Poly({degree},{variance:.4})"),
            BaseKernel::Constant { value } => write!(f, "Const({value:.4})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelOp {
    Sum,
    Product,
}

/// Expression tree of base kernels.
#[derive(Clone, Debug, PartialEq)]
pub enum CompositeKernel {
    Leaf(BaseKernel),
    Node(KernelOp, Vec<CompositeKernel>),
}

impl CompositeKernel {
    pub fn leaf(k: BaseKernel) -> Self {
        CompositeKernel::Leaf(k)
    }

    pub fn sum(children: Vec<CompositeKernel>) -> Self {
        CompositeKernel::Node(KernelOp::Sum, children)
    }

    pub fn product(children: Vec<CompositeKernel>) -> Self {
        CompositeKernel::Node(KernelOp::Product, children)
    }

    pub fn leaves(&self) -> Vec<&BaseKernel> {
        match self {
            CompositeKernel::Leaf(k) => vec![k],
            CompositeKernel::Node(_, c) => c.iter().flat_map(|k| k.leaves()).collect(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CompositeKernel::Leaf(k) => k.validate(),
            CompositeKernel::Node(_, c) => {
                if c.len() < 2 {
                    return Err(Error::InvalidInput("kernel node needs >= 2 children".into()));
                }
                c.iter().try_for_each(|k| k.validate())
            }
        }
    }

    /// Pointwise evaluation `k(a, b)`.
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match self {
            CompositeKernel::Leaf(k) => k.eval(a, b),
            CompositeKernel::Node(KernelOp::Sum, c) => c.iter().map(|k| k.eval(a, b)).sum(),
            CompositeKernel::Node(KernelOp::Product, c) => c.iter().map(|k| k.eval(a, b)).product(),
        }
    }

    /// True when `k(a, b) = 0` for every `a != b`.
    pub fn is_diagonal(&self) -> bool {
        match self {
            CompositeKernel::Leaf(k) => matches!(k, BaseKernel::White { .. }),
            CompositeKernel::Node(KernelOp::Sum, c) => c.iter().all(|k| k.is_diagonal()),
            CompositeKernel::Node(KernelOp::Product, c) => c.iter().any(|k| k.is_diagonal()),
        }
    }

    /// Period of the Periodic leaf with the largest period, if any.
    pub fn dominant_period(&self) -> Option<f64> {
        self.leaves()
            .into_iter()
            .filter_map(|k| match k {
                BaseKernel::Periodic { period, .. } => Some(*period),
                _ => None,
            })
            .max_by(|a, b| a.total_cmp(b))
    }
}

impl fmt::Display for CompositeKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompositeKernel::Leaf(k) => write!(f, "{k}"),
            CompositeKernel::Node(op, c) => {
                let sep = if *op == KernelOp::Sum { " + " } else { " * " };
                f.write_str("(")?;
                for (i, k) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    write!(f, "{k}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Symmetric gram matrix, row-major `n x n`. The upper triangle is computed
/// and mirrored, so symmetry is exact.
pub fn gram(kernel: &CompositeKernel, times: &[f64]) -> Vec<f64> {
    let n = times.len();
    match kernel {
        CompositeKernel::Leaf(k) => {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = k.eval(times[i], times[j]);
                    g[i * n + j] = v;
                    g[j * n + i] = v;
                }
            }
            g
        }
        CompositeKernel::Node(op, children) => {
            let mut acc = gram(&children[0], times);
            for c in &children[1..] {
                let g = gram(c, times);
                for (a, b) in acc.iter_mut().zip(g) {
                    match op {
                        KernelOp::Sum => *a += b,
                        KernelOp::Product => *a *= b,
                    }
                }
            }
            acc
        }
    }
}

pub const JITTER_START: f64 = 1e-8;
pub const JITTER_CAP: f64 = 1e-2;

/// Lower Cholesky factor of `gram + jitter I`, escalating jitter by 10x
/// until `JITTER_CAP`. Returns the factor and the jitter that succeeded.
pub fn cholesky_with_jitter(g: &[f64], n: usize, jitter_start: f64) -> Result<(DMatrix<f64>, f64)> {
    let base = DMatrix::from_row_slice(n, n, g);
    let mut jitter = jitter_start.max(0.0);
    loop {
        let mut m = base.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            return Ok((ch.l(), jitter));
        }
        if jitter >= JITTER_CAP {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        jitter = if jitter == 0.0 { 1e-12 } else { (jitter * 10.0).min(JITTER_CAP) };
    }
}

/// One zero-mean GP draw on `times`.
pub fn sample_gp<R: Rng + ?Sized>(
    kernel: &CompositeKernel,
    times: &[f64],
    rng: &mut R,
    jitter_start: f64,
) -> Result<Vec<f64>> {
    Ok(sample_gp_paths(kernel, times, rng, jitter_start, 1)?.remove(0))
}

/// `count` independent draws sharing one factorization.
pub fn sample_gp_paths<R: Rng + ?Sized>(
    kernel: &CompositeKernel,
    times: &[f64],
    rng: &mut R,
    jitter_start: f64,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = times.len();
    if n == 0 {
        return Err(Error::InvalidInput("GP sampling needs at least one time point".into()));
    }
    let distinct = times.windows(2).all(|w| w[0] < w[1]);
    if kernel.is_diagonal() && distinct {
        // Independent coordinates; skips the dense factorization.
        let sd: Vec<f64> = times.iter().map(|t| (kernel.eval(*t, *t) + jitter_start).sqrt()).collect();
        return Ok((0..count)
            .map(|_| {
                sd.iter()
                    .map(|s| {
                        let z: f64 = StandardNormal.sample(rng);
                        s * z
                    })
                    .collect()
            })
            .collect());
    }
    let g = gram(kernel, times);
    let (l, _) = cholesky_with_jitter(&g, n, jitter_start)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        let y = &l * z;
        out.push(y.iter().copied().collect());
    }
    Ok(out)
}

/// Periodic-period sampler. With probability `calendar_prob` a calendar
/// period for the frequency is used (when it fits in half the series),
/// otherwise the period is log-uniform over `[min_frac, max_frac]` of the
/// series length. Returned periods are fractions of the series length.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodDistribution {
    pub min_frac: f64,
    pub max_frac: f64,
    pub calendar_prob: f64,
}

impl Default for PeriodDistribution {
    fn default() -> Self {
        Self {
            min_frac: 1.0 / 64.0,
            max_frac: 0.5,
            calendar_prob: 0.0,
        }
    }
}

impl PeriodDistribution {
    fn calendar_periods(freq: Frequency) -> Vec<f64> {
        let m = freq.multiple as f64;
        let steps: &[f64] = match freq.unit {
            FreqUnit::Seconds => &[60.0, 3600.0, 86_400.0],
            FreqUnit::Minutes => &[60.0, 1440.0],
            FreqUnit::Hours => &[24.0, 168.0, 12.0],
            FreqUnit::Days => &[7.0, 30.0, 365.0],
            FreqUnit::Weeks => &[52.0, 4.0, 13.0],
            FreqUnit::Months => &[12.0, 3.0, 6.0],
            FreqUnit::Quarters => &[4.0, 2.0],
            FreqUnit::Years => &[],
        };
        steps.iter().map(|s| s / m).filter(|&p| p >= 2.0).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, length: usize, freq: Frequency) -> f64 {
        let l = length.max(2) as f64;
        if rng.random::<f64>() < self.calendar_prob {
            let fits: Vec<f64> = Self::calendar_periods(freq)
                .into_iter()
                .filter(|p| *p <= l / 2.0)
                .collect();
            if !fits.is_empty() {
                return fits[rng.random_range(0..fits.len())] / l;
            }
        }
        log_uniform(rng, self.min_frac, self.max_frac)
    }
}

/// Draws a base kernel of `kind`. Times are assumed normalized to `[0, 1)`.
pub fn sample_base_kernel<R: Rng + ?Sized>(
    rng: &mut R,
    kind: KernelKind,
    length: usize,
    freq: Frequency,
    periods: &PeriodDistribution,
) -> BaseKernel {
    match kind {
        KernelKind::Rbf => BaseKernel::Rbf {
            lengthscale: log_uniform(rng, 0.01, 1.0),
        },
        KernelKind::RationalQuadratic => BaseKernel::RationalQuadratic {
            lengthscale: log_uniform(rng, 0.01, 1.0),
            alpha: log_uniform(rng, 0.1, 10.0),
        },
        KernelKind::Periodic => BaseKernel::Periodic {
            lengthscale: rng.random_range(0.5..2.0),
            period: periods.sample(rng, length, freq),
        },
        KernelKind::White => BaseKernel::White {
            variance: log_uniform(rng, 0.01, 0.5),
        },
        KernelKind::Linear => BaseKernel::Linear {
            variance: rng.random_range(0.1..1.0),
            offset: rng.random_range(0.0..1.0),
        },
        KernelKind::Matern => BaseKernel::Matern {
            lengthscale: log_uniform(rng, 0.01, 1.0),
            nu: [0.5, 1.5, 2.5][rng.random_range(0..3)],
        },
        KernelKind::Polynomial => BaseKernel::Polynomial {
            degree: rng.random_range(1..=4),
            variance: rng.random_range(0.1..1.0),
        },
        KernelKind::Constant => BaseKernel::Constant {
            value: rng.random_range(0.1..1.0),
        },
    }
}

/// Random composite kernel: leaf count uniform on `[1, max_kernels]`, leaves
/// from the weighted bank (`bank_weights[i]` weights `KernelKind::ALL[i]`),
/// each join a uniformly chosen Sum or Product.
pub fn sample_composite_kernel<R: Rng + ?Sized>(
    rng: &mut R,
    bank_weights: &[f64; 8],
    max_kernels: usize,
    length: usize,
    freq: Frequency,
    periods: &PeriodDistribution,
) -> Result<CompositeKernel> {
    if !(1..=6).contains(&max_kernels) {
        return Err(Error::InvalidInput(format!("max_kernels {max_kernels} not in 1..=6")));
    }
    if bank_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || bank_weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidInput("kernel bank weights must be nonnegative and not all zero".into()));
    }
    let count = rng.random_range(1..=max_kernels);
    let mut tree: Option<CompositeKernel> = None;
    for _ in 0..count {
        let kind = KernelKind::ALL[weighted_index(rng, bank_weights)];
        let leaf = CompositeKernel::Leaf(sample_base_kernel(rng, kind, length, freq, periods));
        tree = Some(match tree {
            None => leaf,
            Some(t) => {
                if rng.random::<bool>() {
                    CompositeKernel::sum(vec![t, leaf])
                } else {
                    CompositeKernel::product(vec![t, leaf])
                }
            }
        });
    }
    Ok(tree.expect("count >= 1"))
}

/// `n` points evenly spaced on `[0, 1)`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}
