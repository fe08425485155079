//! A single gated DeltaProduct head: token-by-token versus chunkwise, and
//! the reflection behaviour of a beta = 2 step.

use tsweave::model::recurrence::{householder_step, recurrence_chunkwise, recurrence_sequential, HeadInputs};
use tsweave::sampling::standard_normal;
use tsweave::seed;

fn unit(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn main() {
    let (len, dk, dv, nh) = (100, 16, 16, 2);
    let mut rng = seed::rng(9);
    let inp = HeadInputs {
        len,
        dk,
        dv,
        nh,
        q: (0..len).flat_map(|_| unit(&mut rng, dk)).collect(),
        k: (0..len * nh).flat_map(|_| unit(&mut rng, dk)).collect(),
        v: (0..len * nh * dv).map(|_| standard_normal(&mut rng)).collect(),
        beta: (0..len * nh).map(|i| 2.0 * ((i * 7919) % 100) as f64 / 100.0).collect(),
        log_alpha: (0..len).map(|t| -0.05 * (t % 5) as f64).collect(),
    };
    let h0 = vec![0.0; dk * dv];
    let (seq, hs) = recurrence_sequential(&inp, &h0);
    for chunk in [1, 7, 16, 64] {
        let (chk, hc) = recurrence_chunkwise(&inp, &h0, chunk);
        let d = seq.iter().chain(&hs).zip(chk.iter().chain(&hc)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("chunk {chunk:>3}: max |chunkwise - sequential| = {d:.2e}");
    }
    let f32_inp: HeadInputs<f32> = inp.cast();
    let (c32, _) = recurrence_chunkwise(&f32_inp, &vec![0.0f32; dk * dv], 16);
    let d = seq.iter().zip(&c32).map(|(a, b)| (a - *b as f64).abs()).fold(0.0, f64::max);
    println!("f32 chunkwise vs f64 sequential: {d:.2e}");

    // (I - 2 k k^T) x with v = 0 keeps |x|.
    let k = unit(&mut rng, 4);
    let mut x: Vec<f64> = (0..4).map(|_| standard_normal(&mut rng)).collect();
    let before = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    householder_step(&mut x, 4, 1, &k, &[0.0], 2.0);
    let after = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("reflection: |x| {before:.12} -> {after:.12}");
}
