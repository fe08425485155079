//! Random-variate helpers not covered by `rand_distr`.

use rand::Rng;

pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Index drawn proportionally to nonnegative `weights`.
pub fn weighted_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// `k` distinct indices drawn by successive weighted sampling without
/// replacement, in draw order.
pub fn weighted_without_replacement<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], k: usize) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(w.iter().filter(|x| **x > 0.0).count()) {
        let i = weighted_index(rng, &w);
        out.push(i);
        w[i] = 0.0;
    }
    out
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn without_replacement_is_distinct_and_skips_zero_weights() {
        let mut rng = seed::rng(1);
        for _ in 0..200 {
            let d = weighted_without_replacement(&mut rng, &[1.0, 0.0, 2.0, 0.5], 4);
            assert_eq!(d.len(), 3);
            assert!(!d.contains(&1));
            let mut s = d.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 3);
        }
    }

    #[test]
    fn log_uniform_stays_in_range() {
        let mut rng = seed::rng(2);
        for _ in 0..1000 {
            let x = log_uniform(&mut rng, 0.01, 3.0);
            assert!((0.01..=3.0).contains(&x));
        }
    }
}
