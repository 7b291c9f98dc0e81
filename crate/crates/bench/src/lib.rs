//! Fixtures shared by the criterion benches.

use divfe_core::seed::{self, Stream};
use divfe_core::Tensor;
use rand::Rng;

/// Uniform values in [-1, 1).
pub fn random_tensor(shape: &[usize], seed_value: u64) -> Tensor {
    let mut rng = seed::rng(seed_value, Stream::Init);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches")
}

pub fn random_vectors(count: usize, dim: usize, seed_value: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed_value, Stream::Init);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-0.5..1.5)).collect())
        .collect()
}
