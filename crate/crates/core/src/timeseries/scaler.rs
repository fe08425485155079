use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::stats;

const EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    Robust,
    MinMax,
    Median,
    Mean,
}

impl ScalerKind {
    pub const ALL: [ScalerKind; 4] = [
        ScalerKind::Robust,
        ScalerKind::MinMax,
        ScalerKind::Median,
        ScalerKind::Mean,
    ];

    /// Alternatives to the main robust scaler.
    pub const ALTERNATIVES: [ScalerKind; 3] =
        [ScalerKind::MinMax, ScalerKind::Median, ScalerKind::Mean];

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.random_range(0..Self::ALL.len())]
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalerKind::Robust => "robust",
            ScalerKind::MinMax => "minmax",
            ScalerKind::Median => "median",
            ScalerKind::Mean => "mean",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Affine map `x -> (x - shift) / scale` with `scale > 0`.
///
/// * `Robust`: shift = median, scale = interquartile range.
/// * `MinMax`: observed min maps to 0, max to 1.
/// * `Median`: shift = 0, scale = median of absolute values.
/// * `Mean`: shift = 0, scale = mean of absolute values.
///
/// Every scale is floored at `1e-10`; a constant series under `MinMax`
/// therefore gets scale `1e-10` and maps to zeros.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalerKind,
    pub shift: f64,
    pub scale: f64,
}

impl Scaler {
    pub fn identity() -> Self {
        Self {
            kind: ScalerKind::Mean,
            shift: 0.0,
            scale: 1.0,
        }
    }

    pub fn fit(kind: ScalerKind, observed: &[f64]) -> Result<Self> {
        if observed.is_empty() {
            return Err(Error::EmptyObserved);
        }
        let mut sorted = observed.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let (shift, scale) = match kind {
            ScalerKind::Robust => {
                let med = stats::quantile_sorted(&sorted, 0.5);
                let iqr = stats::quantile_sorted(&sorted, 0.75)
                    - stats::quantile_sorted(&sorted, 0.25);
                (med, iqr)
            }
            ScalerKind::MinMax => (sorted[0], sorted[sorted.len() - 1] - sorted[0]),
            ScalerKind::Median => {
                let mut abs: Vec<f64> = observed.iter().map(|v| v.abs()).collect();
                abs.sort_by(|a, b| a.total_cmp(b));
                (0.0, stats::quantile_sorted(&abs, 0.5))
            }
            ScalerKind::Mean => {
                let m = observed.iter().map(|v| v.abs()).sum::<f64>() / observed.len() as f64;
                (0.0, m)
            }
        };
        Ok(Self {
            kind,
            shift,
            scale: if scale.is_finite() { scale.max(EPS) } else { EPS },
        })
    }

    pub fn fit_series(kind: ScalerKind, series: &TimeSeries) -> Result<Self> {
        Self::fit(kind, &series.observed())
    }

    pub fn apply_value(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    pub fn invert_value(&self, z: f64) -> f64 {
        z * self.scale + self.shift
    }

    /// Scales observed positions; missing positions pass through.
    pub fn apply(&self, series: &TimeSeries) -> TimeSeries {
        let mut out = series.clone();
        for (v, &m) in out.values.iter_mut().zip(&series.mask) {
            if m {
                *v = self.apply_value(*v);
            }
        }
        out
    }

    pub fn invert(&self, series: &TimeSeries) -> TimeSeries {
        let mut out = series.clone();
        for (v, &m) in out.values.iter_mut().zip(&series.mask) {
            if m {
                *v = self.invert_value(*v);
            }
        }
        out
    }
}
