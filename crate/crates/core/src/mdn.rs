//! Minimum distance classification against the Walsh codebook.
//!
//! `D_k = sum_j (O_j - H_kj)^2` for every assigned class row; the decision
//! is the smallest `D_k`, ties going to the lowest class index.

use crate::error::{Error, Result};
use crate::walsh::WalshCodebook;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVector {
    pub distances: Vec<f64>,
    pub argmin: usize,
    /// Set when two or more classes share the minimum distance.
    pub tie: bool,
}

pub fn distances(output: &[f64], codebook: &WalshCodebook) -> Result<DistanceVector> {
    if output.len() != codebook.rank() {
        return Err(Error::shape(format!(
            "feature vector of length {} for a rank-{} codebook",
            output.len(),
            codebook.rank()
        )));
    }
    let distances: Vec<f64> = codebook
        .targets()
        .iter()
        .map(|t| output.iter().zip(t).map(|(o, h)| (o - h) * (o - h)).sum())
        .collect();
    let mut argmin = 0;
    for (k, &d) in distances.iter().enumerate().skip(1) {
        if d < distances[argmin] {
            argmin = k;
        }
    }
    let best = distances[argmin];
    let tie = distances.iter().filter(|&&d| d == best).count() > 1;
    Ok(DistanceVector {
        distances,
        argmin,
        tie,
    })
}

pub fn classify(output: &[f64], codebook: &WalshCodebook) -> Result<usize> {
    Ok(distances(output, codebook)?.argmin)
}
