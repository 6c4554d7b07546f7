#![allow(dead_code)]

use chanprobe_core::{ActivationTrace, LayerInfo};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-major values for `channels` columns driven by three shared latent
/// factors plus per-channel noise.
pub fn factor_matrix(rng: &mut impl Rng, rows: usize, channels: usize) -> Vec<f32> {
    let weights: Vec<[f64; 3]> = (0..channels)
        .map(|_| [0; 3].map(|_| rng.random_range(-2.0..2.0)))
        .collect();
    let noise: Vec<f64> = (0..channels).map(|_| rng.random_range(0.05..1.0)).collect();
    let offset: Vec<f64> = (0..channels).map(|_| rng.random_range(0.0..10.0)).collect();
    let mut values = Vec::with_capacity(rows * channels);
    for _ in 0..rows {
        let latent = [0; 3].map(|_| rng.random_range(-1.0..1.0));
        for c in 0..channels {
            let signal: f64 = (0..3).map(|f| weights[c][f] * latent[f]).sum();
            values.push((offset[c] + signal + noise[c] * rng.random_range(-1.0..1.0)) as f32);
        }
    }
    values
}

pub fn labeled_trace(
    rng: &mut impl Rng,
    layers: &[(&str, usize)],
    rows: usize,
    classes: usize,
) -> ActivationTrace {
    let total = layers.iter().map(|l| l.1).sum();
    let values = factor_matrix(rng, rows, total);
    let labels = (0..rows).map(|r| (r % classes) as u32).collect();
    ActivationTrace::new(
        layers.iter().map(|&(n, c)| LayerInfo::new(n, c)).collect(),
        rows,
        values,
        Some(labels),
        Some((0..classes).map(|c| format!("class{c}")).collect()),
    )
    .unwrap()
}
