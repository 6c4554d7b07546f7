#![allow(dead_code)]

use chanprobe_core::{ActivationTrace, LayerInfo};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Columns driven by a few shared latent factors, so correlations span the
/// whole range instead of clustering near zero.
pub fn factor_columns(rng: &mut impl Rng, rows: usize, channels: usize) -> Vec<Vec<f32>> {
    let factors = 3;
    let latent: Vec<Vec<f64>> = (0..factors)
        .map(|_| (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (0..channels)
        .map(|_| {
            let weights: Vec<f64> = (0..factors).map(|_| rng.random_range(-2.0..2.0)).collect();
            let noise = rng.random_range(0.05..1.0);
            let offset = rng.random_range(0.0..10.0);
            (0..rows)
                .map(|r| {
                    let signal: f64 = (0..factors).map(|f| weights[f] * latent[f][r]).sum();
                    (offset + signal + noise * rng.random_range(-1.0..1.0)) as f32
                })
                .collect()
        })
        .collect()
}

pub fn trace_from_columns(
    layers: &[(&str, usize)],
    columns: &[Vec<f32>],
    labels: Option<(Vec<u32>, usize)>,
) -> ActivationTrace {
    let rows = columns.first().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(rows * columns.len());
    for r in 0..rows {
        for c in columns {
            values.push(c[r]);
        }
    }
    let (labels, names) = match labels {
        Some((l, classes)) => (Some(l), Some((0..classes).map(|c| c.to_string()).collect())),
        None => (None, None),
    };
    ActivationTrace::new(
        layers.iter().map(|&(n, c)| LayerInfo::new(n, c)).collect(),
        rows,
        values,
        labels,
        names,
    )
    .unwrap()
}

pub fn column(trace: &ActivationTrace, rows: &[usize], col: usize) -> Vec<f64> {
    rows.iter().map(|&r| f64::from(trace.value(r, col))).collect()
}
