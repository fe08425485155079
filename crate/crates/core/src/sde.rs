//! Regime-switching, time-inhomogeneous Ornstein-Uhlenbeck generator with
//! optional fractional Brownian driving noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sampling::log_uniform;
use crate::timeseries::{Frequency, TimeSeries};

pub const DEFAULT_FBM_MAX_LEN: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeParams {
    pub theta: [f64; 2],
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

impl RegimeParams {
    pub fn constant(theta: f64, mu: f64, sigma: f64) -> Self {
        Self {
            theta: [theta; 2],
            mu: [mu; 2],
            sigma: [sigma; 2],
        }
    }
}

/// Smooth trend on raw time `t`; all kinds vanish at `t = 0` except
/// Sinusoidal and Logistic.
#[derive(Clone, Debug, PartialEq)]
pub enum TrendSpec {
    Linear { slope: f64 },
    /// `coeffs[k]` multiplies `t^(k+1)`; at most 3 terms.
    Polynomial { coeffs: Vec<f64> },
    Sinusoidal { amplitude: f64, period: f64, phase: f64 },
    Logistic { amplitude: f64, midpoint: f64, steepness: f64 },
    /// Continuous, zero at `t = 0`, slope `slopes[i]` after `knots[i-1]`.
    PiecewiseLinear { knots: Vec<f64>, slopes: Vec<f64> },
}

impl TrendSpec {
    pub fn evaluate(&self, t: f64) -> f64 {
        match self {
            TrendSpec::Linear { slope } => slope * t,
            TrendSpec::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * t.powi(k as i32 + 1))
                .sum(),
            TrendSpec::Sinusoidal {
                amplitude,
                period,
                phase,
            } => amplitude * (2.0 * PI * t / period + phase).sin(),
            TrendSpec::Logistic {
                amplitude,
                midpoint,
                steepness,
            } => amplitude / (1.0 + (-steepness * (t - midpoint)).exp()),
            TrendSpec::PiecewiseLinear { knots, slopes } => {
                let mut acc = 0.0;
                let mut prev = 0.0;
                for (i, slope) in slopes.iter().enumerate() {
                    let end = knots.get(i).copied().unwrap_or(f64::INFINITY);
                    if t <= end {
                        return acc + slope * (t - prev);
                    }
                    acc += slope * (end - prev);
                    prev = end;
                }
                acc
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            TrendSpec::Linear { .. } => "linear",
            TrendSpec::Polynomial { .. } => "polynomial",
            TrendSpec::Sinusoidal { .. } => "sinusoidal",
            TrendSpec::Logistic { .. } => "logistic",
            TrendSpec::PiecewiseLinear { .. } => "piecewise",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeasonalSpec {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub amplitude_drift: f64,
}

impl SeasonalSpec {
    pub fn evaluate(&self, t: f64) -> f64 {
        (self.amplitude + self.amplitude_drift * t) * (2.0 * PI * t / self.period + self.phase).sin()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OUConfig {
    pub regime: RegimeParams,
    pub theta_trend: Option<TrendSpec>,
    pub mu_trend: Option<TrendSpec>,
    pub sigma_trend: Option<TrendSpec>,
    pub mu_seasons: Vec<SeasonalSpec>,
    pub sigma_seasons: Vec<SeasonalSpec>,
    pub p00: f64,
    pub p11: f64,
    pub use_fbm: bool,
    pub hurst: f64,
    pub dt: f64,
    /// Returned steps, after burn-in is discarded.
    pub length: usize,
    pub burn_in_frac: f64,
    pub scale: f64,
    pub shift: f64,
    pub noise_sigma: f64,
    /// Overrides the initial-state draw when set.
    pub initial_state: Option<f64>,
}

impl OUConfig {
    /// Constant-parameter single-regime process with no postprocessing.
    pub fn constant(theta: f64, mu: f64, sigma: f64, dt: f64, length: usize) -> Self {
        Self {
            regime: RegimeParams::constant(theta, mu, sigma),
            theta_trend: None,
            mu_trend: None,
            sigma_trend: None,
            mu_seasons: Vec::new(),
            sigma_seasons: Vec::new(),
            p00: 0.9,
            p11: 0.9,
            use_fbm: false,
            hurst: 0.5,
            dt,
            length,
            burn_in_frac: 0.1,
            scale: 1.0,
            shift: 0.0,
            noise_sigma: 0.0,
            initial_state: None,
        }
    }

    pub fn burn_in_steps(&self) -> usize {
        (self.length as f64 * self.burn_in_frac).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        self.length + self.burn_in_steps()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.length == 0 {
            return bad("OU length must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        for r in 0..2 {
            if !(self.regime.theta[r] >= 0.0 && self.regime.sigma[r] >= 0.0) {
                return bad(format!("regime {r} theta/sigma must be nonnegative"));
            }
        }
        for p in [self.p00, self.p11] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("switch probability {p} outside [0, 1]"));
            }
        }
        if self.use_fbm && !(self.hurst > 0.0 && self.hurst < 1.0) {
            return bad(format!("Hurst exponent {} outside (0, 1)", self.hurst));
        }
        if !(0.0..1.0).contains(&self.burn_in_frac) {
            return bad(format!("burn-in fraction {} outside [0, 1)", self.burn_in_frac));
        }
        let mut theta_max: f64 = 0.0;
        for i in 0..self.total_steps() {
            let t = i as f64 * self.dt;
            let th = 1.0 + self.theta_trend.as_ref().map_or(0.0, |s| s.evaluate(t));
            let sg = 1.0
                + self.sigma_trend.as_ref().map_or(0.0, |s| s.evaluate(t))
                + self.sigma_seasons.iter().map(|s| s.evaluate(t)).sum::<f64>();
            if !(th > 0.0 && sg > 0.0) {
                return bad(format!("trend multipliers not positive at t={t}"));
            }
            theta_max = theta_max.max(th * self.regime.theta[0].max(self.regime.theta[1]));
        }
        if self.dt * theta_max >= 2.0 {
            return bad(format!("dt*theta_max = {} violates Euler stability", self.dt * theta_max));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let tr = |t: &Option<TrendSpec>| t.as_ref().map_or("none", |t| t.name());
        format!(
            "sde(theta={:.3}/{:.3},mu={:.3}/{:.3},sigma={:.3}/{:.3},p00={:.3},p11={:.3},dt={:.4},fbm={},H={:.2},trends={}/{}/{},seasons={}/{})",
            self.regime.theta[0],
            self.regime.theta[1],
            self.regime.mu[0],
            self.regime.mu[1],
            self.regime.sigma[0],
            self.regime.sigma[1],
            self.p00,
            self.p11,
            self.dt,
            self.use_fbm,
            self.hurst,
            tr(&self.theta_trend),
            tr(&self.mu_trend),
            tr(&self.sigma_trend),
            self.mu_seasons.len(),
            self.sigma_seasons.len(),
        )
    }
}

pub fn simulate_regime_chain<R: Rng + ?Sized>(rng: &mut R, length: usize, p00: f64, p11: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(length);
    if length == 0 {
        return out;
    }
    let mut r: u8 = if rng.random::<bool>() { 1 } else { 0 };
    out.push(r);
    for _ in 1..length {
        let stay = if r == 0 { p00 } else { p11 };
        if rng.random::<f64>() >= stay {
            r ^= 1;
        }
        out.push(r);
    }
    out
}

fn fgn_autocov(k: usize, h: f64) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Fractional Gaussian noise increments on a `dt` grid, exact in
/// distribution via circulant embedding.
pub fn fbm_increments<R: Rng + ?Sized>(rng: &mut R, length: usize, hurst: f64, dt: f64) -> Result<Vec<f64>> {
    fbm_increments_bounded(rng, length, hurst, dt, DEFAULT_FBM_MAX_LEN)
}

pub fn fbm_increments_bounded<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    hurst: f64,
    dt: f64,
    max_len: usize,
) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidInput(format!("Hurst exponent {hurst} outside (0, 1)")));
    }
    if length > max_len {
        return Err(Error::InvalidInput(format!(
            "fBm length {length} exceeds bound {max_len}"
        )));
    }
    if length == 0 {
        return Ok(Vec::new());
    }
    let n = length.next_power_of_two().max(2);
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex::new(fgn_autocov(k, hurst), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let mut w: Vec<Complex<f64>> = Vec::with_capacity(m);
    for lam in &row {
        let l = lam.re;
        if l < -1e-8 * row[0].re.abs().max(1.0) {
            return Err(Error::NonFinite(format!("negative circulant eigenvalue {l}")));
        }
        let s = (l.max(0.0) / m as f64).sqrt();
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        w.push(Complex::new(s * a, s * b));
    }
    fft.process(&mut w);
    let scale = dt.powf(hurst);
    Ok(w[..length].iter().map(|c| c.re * scale).collect())
}

pub fn evaluate_params(t: f64, r: u8, config: &OUConfig) -> (f64, f64, f64) {
    let r = r as usize;
    let theta = config.regime.theta[r] * (1.0 + config.theta_trend.as_ref().map_or(0.0, |s| s.evaluate(t)));
    let mu = config.regime.mu[r]
        + config.mu_trend.as_ref().map_or(0.0, |s| s.evaluate(t))
        + config.mu_seasons.iter().map(|s| s.evaluate(t)).sum::<f64>();
    let sigma = config.regime.sigma[r]
        * (1.0
            + config.sigma_trend.as_ref().map_or(0.0, |s| s.evaluate(t))
            + config.sigma_seasons.iter().map(|s| s.evaluate(t)).sum::<f64>());
    (theta, mu, sigma)
}

/// Full simulated path including burn-in, with the regime path.
pub fn simulate_ou_path<R: Rng + ?Sized>(config: &OUConfig, rng: &mut R) -> Result<(Vec<f64>, Vec<u8>)> {
    config.validate()?;
    let n = config.total_steps();
    let regimes = simulate_regime_chain(rng, n, config.p00, config.p11);
    let noise: Vec<f64> = if config.use_fbm {
        fbm_increments(rng, n, config.hurst, config.dt)?
    } else {
        let sd = config.dt.sqrt();
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect()
    };
    let r0 = regimes[0] as usize;
    let z: f64 = StandardNormal.sample(rng);
    let mut y = config
        .initial_state
        .unwrap_or(config.regime.mu[r0] + config.regime.sigma[r0] * z);
    let mut path = Vec::with_capacity(n);
    path.push(y);
    for i in 1..n {
        let t = (i - 1) as f64 * config.dt;
        let (theta, mu, sigma) = evaluate_params(t, regimes[i - 1], config);
        y += theta * (mu - y) * config.dt + sigma * noise[i - 1];
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("OU state diverged at step {i}")));
        }
        path.push(y);
    }
    Ok((path, regimes))
}

/// Simulates and drops burn-in. Postprocessing is separate.
pub fn simulate_ou<R: Rng + ?Sized>(config: &OUConfig, rng: &mut R) -> Result<TimeSeries> {
    let (path, _) = simulate_ou_path(config, rng)?;
    let burn = config.burn_in_steps();
    TimeSeries::from_values(path[burn..].to_vec(), Frequency::DAILY)
        .map(|s| s.with_provenance(config.describe()))
}

/// `s * (y + eps) + shift` with `eps ~ N(0, noise_sigma^2)`, so the noise
/// standard deviation in output units is `noise_sigma * s`.
pub fn postprocess<R: Rng + ?Sized>(series: &TimeSeries, config: &OUConfig, rng: &mut R) -> TimeSeries {
    let values = series
        .values
        .iter()
        .map(|v| {
            let eps = if config.noise_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                config.noise_sigma * z
            } else {
                0.0
            };
            config.scale * (v + eps) + config.shift
        })
        .collect();
    series.replace_values(values)
}

/// Sampling ranges for `sample_ou_config`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OUPriors {
    pub switch_prob: (f64, f64),
    pub hurst: (f64, f64),
    pub scale: (f64, f64),
    pub shift: (f64, f64),
    pub noise_sigma: (f64, f64),
    pub dt: (f64, f64),
    pub theta: (f64, f64),
    pub mu: (f64, f64),
    pub sigma: (f64, f64),
    pub fbm_prob: f64,
    pub trend_prob: f64,
    pub max_mu_seasons: usize,
    pub burn_in_frac: f64,
}

impl Default for OUPriors {
    fn default() -> Self {
        Self {
            switch_prob: (0.85, 0.999),
            hurst: (0.3, 0.8),
            scale: (0.1, 50.0),
            shift: (-100.0, 100.0),
            noise_sigma: (0.0, 0.1),
            dt: (1e-3, 1e-1),
            theta: (0.1, 5.0),
            mu: (-2.0, 2.0),
            sigma: (0.05, 1.0),
            fbm_prob: 0.3,
            trend_prob: 0.5,
            max_mu_seasons: 2,
            burn_in_frac: 0.1,
        }
    }
}

const TREND_RETRIES: usize = 50;

fn sample_trend<R: Rng + ?Sized>(rng: &mut R, span: f64, magnitude: f64) -> TrendSpec {
    match rng.random_range(0..5) {
        0 => TrendSpec::Linear {
            slope: rng.random_range(-magnitude..magnitude) / span,
        },
        1 => {
            let degree = rng.random_range(1..=3);
            TrendSpec::Polynomial {
                coeffs: (1..=degree)
                    .map(|k| rng.random_range(-magnitude..magnitude) / (degree as f64 * span.powi(k)))
                    .collect(),
            }
        }
        2 => TrendSpec::Sinusoidal {
            amplitude: rng.random_range(0.0..magnitude),
            period: span * rng.random_range(0.5..2.0),
            phase: rng.random_range(0.0..2.0 * PI),
        },
        3 => TrendSpec::Logistic {
            amplitude: rng.random_range(-magnitude..magnitude),
            midpoint: span * rng.random_range(0.2..0.8),
            steepness: rng.random_range(2.0..20.0) / span,
        },
        _ => {
            let k = rng.random_range(2..=4);
            let mut knots: Vec<f64> = (0..k - 1).map(|_| span * rng.random::<f64>()).collect();
            knots.sort_by(|a, b| a.total_cmp(b));
            let slopes = (0..k)
                .map(|_| rng.random_range(-magnitude..magnitude) / span)
                .collect();
            TrendSpec::PiecewiseLinear { knots, slopes }
        }
    }
}

fn sample_season<R: Rng + ?Sized>(rng: &mut R, span: f64, max_amp: f64) -> SeasonalSpec {
    let amplitude = rng.random_range(0.0..max_amp);
    SeasonalSpec {
        amplitude,
        period: span * log_uniform(rng, 1.0 / 64.0, 0.5),
        phase: rng.random_range(0.0..2.0 * PI),
        amplitude_drift: amplitude * rng.random_range(-0.5..0.5) / span,
    }
}

/// Draws a valid configuration; trend and dt choices are rejection-sampled
/// until `OUConfig::validate` passes.
pub fn sample_ou_config<R: Rng + ?Sized>(rng: &mut R, length: usize, priors: &OUPriors) -> Result<OUConfig> {
    let uni = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let regime = RegimeParams {
        theta: [log_uniform(rng, priors.theta.0, priors.theta.1), log_uniform(rng, priors.theta.0, priors.theta.1)],
        mu: [uni(rng, priors.mu), uni(rng, priors.mu)],
        sigma: [log_uniform(rng, priors.sigma.0, priors.sigma.1), log_uniform(rng, priors.sigma.0, priors.sigma.1)],
    };
    let p00 = uni(rng, priors.switch_prob);
    let p11 = uni(rng, priors.switch_prob);
    let use_fbm = rng.random::<f64>() < priors.fbm_prob;
    let hurst = uni(rng, priors.hurst);
    let scale = uni(rng, priors.scale);
    let shift = uni(rng, priors.shift);
    let noise_sigma = uni(rng, priors.noise_sigma);
    for _ in 0..TREND_RETRIES {
        let dt = log_uniform(rng, priors.dt.0, priors.dt.1);
        let burn = (length as f64 * priors.burn_in_frac).round();
        let span = (length as f64 + burn) * dt;
        let pick = |rng: &mut R, mag: f64| {
            if rng.random::<f64>() < priors.trend_prob {
                Some(sample_trend(rng, span, mag))
            } else {
                None
            }
        };
        let theta_trend = pick(rng, 0.5);
        let mu_trend = pick(rng, 2.0);
        let sigma_trend = pick(rng, 0.5);
        let n_mu = rng.random_range(0..=priors.max_mu_seasons);
        let mu_seasons = (0..n_mu).map(|_| sample_season(rng, span, 1.0)).collect();
        let sigma_seasons = if rng.random::<f64>() < priors.trend_prob {
            vec![sample_season(rng, span, 0.3)]
        } else {
            Vec::new()
        };
        let cfg = OUConfig {
            regime,
            theta_trend,
            mu_trend,
            sigma_trend,
            mu_seasons,
            sigma_seasons,
            p00,
            p11,
            use_fbm,
            hurst,
            dt,
            length,
            burn_in_frac: priors.burn_in_frac,
            scale,
            shift,
            noise_sigma,
            initial_state: None,
        };
        if cfg.validate().is_ok() {
            return Ok(cfg);
        }
    }
    Err(Error::RetryExhausted {
        what: "OU trend sampling",
        attempts: TREND_RETRIES,
    })
}

/// Sampled config, simulated, postprocessed.
pub fn gen_sde<R: Rng + ?Sized>(rng: &mut R, length: usize, freq: Frequency, priors: &OUPriors) -> Result<TimeSeries> {
    let cfg = sample_ou_config(rng, length, priors)?;
    let raw = simulate_ou(&cfg, rng)?;
    let mut out = postprocess(&raw, &cfg, rng);
    out.freq = freq;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::stats;

    #[test]
    fn absorbing_chain_is_constant() {
        let p = simulate_regime_chain(&mut seed::rng(1), 1000, 1.0, 1.0);
        assert!(p.iter().all(|&r| r == p[0]));
    }

    #[test]
    fn fair_chain_has_no_memory() {
        let p: Vec<f64> = simulate_regime_chain(&mut seed::rng(2), 1_000_000, 0.5, 0.5)
            .into_iter()
            .map(f64::from)
            .collect();
        assert!(stats::autocorrelation(&p, 1).abs() < 0.01);
    }

    #[test]
    fn brownian_fgn_is_white() {
        let x = fbm_increments_bounded(&mut seed::rng(3), 100_000, 0.5, 1.0, 1 << 17).unwrap();
        assert!(stats::autocorrelation(&x, 1).abs() < 0.01);
        let v = stats::variance(&x);
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn fbm_length_bound() {
        assert!(fbm_increments(&mut seed::rng(3), DEFAULT_FBM_MAX_LEN + 1, 0.7, 1.0).is_err());
        let a = fbm_increments(&mut seed::rng(4), 100, 0.7, 0.1).unwrap();
        let b = fbm_increments(&mut seed::rng(4), 100, 0.7, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fgn_covariance_matches_formula() {
        // Lag-1 correlation of fGn is 2^(2H-1) - 1.
        let h = 0.7;
        let x = fbm_increments(&mut seed::rng(5), 65_536, h, 1.0).unwrap();
        let r = stats::autocorrelation(&x, 1);
        let expect = 2f64.powf(2.0 * h - 1.0) - 1.0;
        assert!((r - expect).abs() < 0.02, "{r} vs {expect}");
    }

    #[test]
    fn params_without_trends_are_verbatim() {
        let mut c = OUConfig::constant(1.0, 0.0, 1.0, 0.01, 10);
        c.regime = RegimeParams {
            theta: [1.5, 2.5],
            mu: [-1.0, 3.0],
            sigma: [0.2, 0.4],
        };
        assert_eq!(evaluate_params(3.7, 0, &c), (1.5, -1.0, 0.2));
        assert_eq!(evaluate_params(3.7, 1, &c), (2.5, 3.0, 0.4));
    }

    #[test]
    fn seasonal_mean_is_periodic_and_linear_theta() {
        let mut c = OUConfig::constant(2.0, 1.0, 0.5, 0.01, 10);
        c.mu_seasons.push(SeasonalSpec {
            amplitude: 0.7,
            period: 3.0,
            phase: 0.4,
            amplitude_drift: 0.0,
        });
        c.theta_trend = Some(TrendSpec::Linear { slope: 0.25 });
        for t in [0.0, 0.3, 1.7, 5.2] {
            let (th, mu, _) = evaluate_params(t, 0, &c);
            let (_, mu2, _) = evaluate_params(t + 3.0, 0, &c);
            assert!((mu - mu2).abs() < 1e-12);
            assert!((th / 2.0 - (1.0 + 0.25 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn piecewise_trend_is_continuous() {
        let tr = TrendSpec::PiecewiseLinear {
            knots: vec![1.0, 2.0],
            slopes: vec![1.0, -1.0, 2.0],
        };
        assert_eq!(tr.evaluate(0.0), 0.0);
        assert_eq!(tr.evaluate(1.0), 1.0);
        assert_eq!(tr.evaluate(2.0), 0.0);
        assert_eq!(tr.evaluate(3.0), 2.0);
    }

    #[test]
    fn deterministic_relaxation() {
        let mut c = OUConfig::constant(2.0, 1.0, 0.0, 0.01, 500);
        c.burn_in_frac = 0.0;
        c.initial_state = Some(-3.0);
        let (p, _) = simulate_ou_path(&c, &mut seed::rng(6)).unwrap();
        let d0 = (p[0] - 1.0).abs();
        for w in p.windows(2) {
            assert!((w[1] - 1.0).abs() <= (w[0] - 1.0).abs());
        }
        let bound = d0 * (1.0 - 2.0 * 0.01f64).powi(p.len() as i32 - 1);
        assert!((p[p.len() - 1] - 1.0).abs() <= bound * (1.0 + 1e-9));
    }

    fn euler_max_err(dt: f64) -> f64 {
        // sigma = 0 makes the path deterministic given y0.
        let horizon = 2.0;
        let n = (horizon / dt).round() as usize + 1;
        let mut c = OUConfig::constant(2.0, 1.0, 0.0, dt, n);
        c.burn_in_frac = 0.0;
        c.regime.sigma = [0.0; 2];
        c.initial_state = Some(4.0);
        let (p, _) = simulate_ou_path(&c, &mut seed::rng(0)).unwrap();
        let y0 = p[0];
        p.iter()
            .enumerate()
            .map(|(i, y)| (y - (1.0 + (y0 - 1.0) * (-2.0 * i as f64 * dt).exp())).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn euler_is_first_order() {
        let e1 = euler_max_err(0.02);
        let e2 = euler_max_err(0.01);
        let ratio = e1 / e2;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn stationary_moments_over_seeds() {
        for s in 0..5 {
            let c = OUConfig::constant(2.0, 1.0, 0.5, 0.01, 200_000);
            let ts = simulate_ou(&c, &mut seed::rng(100 + s)).unwrap();
            let m = stats::mean(&ts.values);
            let v = stats::variance(&ts.values);
            assert!((m - 1.0).abs() < 0.05, "mean {m}");
            assert!((v / 0.0625 - 1.0).abs() < 0.1, "var {v}");
        }
    }

    #[test]
    fn random_walk_increments() {
        let mut c = OUConfig::constant(0.0, 0.0, 0.8, 0.01, 100_000);
        c.burn_in_frac = 0.0;
        let ts = simulate_ou(&c, &mut seed::rng(7)).unwrap();
        let inc: Vec<f64> = ts.values.windows(2).map(|w| w[1] - w[0]).collect();
        let v = stats::variance(&inc);
        assert!((v / (0.64 * 0.01) - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn regime_means_are_recovered() {
        let mut c = OUConfig::constant(5.0, 0.0, 0.1, 0.01, 100_000);
        c.regime.mu = [-10.0, 10.0];
        c.p00 = 0.999;
        c.p11 = 0.999;
        c.burn_in_frac = 0.0;
        let (p, r) = simulate_ou_path(&c, &mut seed::rng(8)).unwrap();
        // Skip a settling window after each switch.
        let mut sums = [0.0; 2];
        let mut counts = [0usize; 2];
        let mut since = 0usize;
        for i in 1..p.len() {
            since = if r[i - 1] == r[i.saturating_sub(2)] { since + 1 } else { 0 };
            if since > 200 {
                sums[r[i - 1] as usize] += p[i];
                counts[r[i - 1] as usize] += 1;
            }
        }
        assert!((sums[0] / counts[0] as f64 + 10.0).abs() < 0.5);
        assert!((sums[1] / counts[1] as f64 - 10.0).abs() < 0.5);
    }

    #[test]
    fn postprocess_identity_and_affine() {
        let ts = TimeSeries::from_values(vec![1.0, -2.0, 3.5], Frequency::DAILY).unwrap();
        let mut c = OUConfig::constant(1.0, 0.0, 1.0, 0.01, 3);
        assert_eq!(postprocess(&ts, &c, &mut seed::rng(1)).values, ts.values);
        c.scale = 2.0;
        c.shift = -1.0;
        assert_eq!(postprocess(&ts, &c, &mut seed::rng(1)).values, vec![1.0, -5.0, 6.0]);
    }

    #[test]
    fn postprocess_noise_level() {
        let ts = TimeSeries::from_values(vec![3.0; 100_000], Frequency::DAILY).unwrap();
        let mut c = OUConfig::constant(1.0, 0.0, 1.0, 0.01, 3);
        c.scale = 4.0;
        c.noise_sigma = 0.1;
        let out = postprocess(&ts, &c, &mut seed::rng(2));
        let sd = stats::std_dev(&out.values);
        assert!((sd / 0.4 - 1.0).abs() < 0.02, "{sd}");
    }

    #[test]
    fn sampled_configs_are_valid_and_finite() {
        let mut rng = seed::rng(11);
        for _ in 0..30 {
            let ts = gen_sde(&mut rng, 512, Frequency::HOURLY, &OUPriors::default()).unwrap();
            assert_eq!(ts.len(), 512);
            assert!(ts.is_finite());
        }
    }
}
