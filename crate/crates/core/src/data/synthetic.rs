//! Seeded toy datasets for tests, benches and demos.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::LabeledDataset;
use crate::numerics::Tensor;
use crate::seed::{self, Stream};

/// Gaussian blobs of unit variance in `dim` dimensions. Class `k` is centred
/// at `separation * k` times a fixed random unit vector.
pub fn blobs(classes: usize, per_class: usize, dim: usize, separation: f64, seed_value: u64) -> LabeledDataset {
    let mut rng = seed::rng(seed_value, Stream::Subset);
    let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let mut samples = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for k in 0..classes {
        for _ in 0..per_class {
            let x = dir
                .iter()
                .map(|d| separation * k as f64 * d + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            samples.push(Tensor::vector(x));
            labels.push(k);
        }
    }
    LabeledDataset::new(samples, labels, classes)
        .expect("consistent by construction")
        .with_provenance("synthetic:blobs")
}

/// Two-feature XOR: corners of the square `{-1, 1}^2` plus Gaussian jitter;
/// label 1 when the signs agree.
pub fn xor(per_class: usize, jitter: f64, seed_value: u64) -> LabeledDataset {
    let mut rng = seed::rng(seed_value, Stream::Subset);
    let noise = Normal::new(0.0, jitter).expect("jitter >= 0");
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for label in 0..2 {
        for _ in 0..per_class {
            let a: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let b = if label == 1 { a } else { -a };
            samples.push(Tensor::vector(vec![a + noise.sample(&mut rng), b + noise.sample(&mut rng)]));
            labels.push(label);
        }
    }
    LabeledDataset::new(samples, labels, 2)
        .expect("consistent by construction")
        .with_provenance("synthetic:xor")
}
