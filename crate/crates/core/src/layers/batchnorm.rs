//! Per-plane batch normalization. Axis 1 is the plane axis; every other
//! axis (batch and spatial) is reduced over.

use crate::error::{Error, Result};
use crate::numerics::{Backward, Tensor};

pub const EPSILON: f64 = 1e-5;
pub const MOMENTUM: f64 = 0.9;

fn layout(x: &Tensor) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::shape(format!("batchnorm expects [N,C,..], got {s:?}")));
    }
    Ok((s[0], s[1], s[2..].iter().product()))
}

/// Result of a training-mode pass: output plus the batch statistics.
pub struct BatchNormPass {
    pub output: Tensor,
    pub mean: Vec<f64>,
    /// Biased (divide-by-count) batch variance.
    pub var: Vec<f64>,
    pub backward: BatchNormBackward,
}

/// Normalizes with batch statistics. Requires a batch of at least two samples.
pub fn batchnorm_train(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<BatchNormPass> {
    let (n, c, sp) = layout(x)?;
    if n < 2 {
        return Err(Error::contract("batch normalization in training mode needs a batch of at least 2"));
    }
    check_params(c, gamma, beta)?;
    let m = (n * sp) as f64;
    let d = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for b in 0..n {
        for p in 0..c {
            let s = &d[(b * c + p) * sp..(b * c + p + 1) * sp];
            mean[p] += s.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for b in 0..n {
        for p in 0..c {
            let s = &d[(b * c + p) * sp..(b * c + p + 1) * sp];
            var[p] += s.iter().map(|v| (v - mean[p]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let (xhat, out) = normalize(x, c, sp, &mean, &inv_std, gamma, beta);
    Ok(BatchNormPass {
        output: out,
        mean,
        var,
        backward: BatchNormBackward {
            xhat,
            inv_std,
            batch_stats: true,
        },
    })
}

/// Normalizes with fixed (running) statistics.
pub fn batchnorm_infer(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Result<(Tensor, BatchNormBackward)> {
    let (_, c, sp) = layout(x)?;
    check_params(c, gamma, beta)?;
    let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let (xhat, out) = normalize(x, c, sp, running_mean, &inv_std, gamma, beta);
    Ok((
        out,
        BatchNormBackward {
            xhat,
            inv_std,
            batch_stats: false,
        },
    ))
}

fn check_params(c: usize, gamma: &Tensor, beta: &Tensor) -> Result<()> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "batchnorm parameters {:?}/{:?} for {c} planes",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(())
}

fn normalize(
    x: &Tensor,
    c: usize,
    sp: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &Tensor,
    beta: &Tensor,
) -> (Vec<f64>, Tensor) {
    let mut xhat = x.data().to_vec();
    for (i, chunk) in xhat.chunks_exact_mut(sp).enumerate() {
        let p = i % c;
        chunk.iter_mut().for_each(|v| *v = (*v - mean[p]) * inv_std[p]);
    }
    let mut out = xhat.clone();
    for (i, chunk) in out.chunks_exact_mut(sp).enumerate() {
        let p = i % c;
        let (g, b) = (gamma.data()[p], beta.data()[p]);
        chunk.iter_mut().for_each(|v| *v = g * *v + b);
    }
    let out = Tensor::new(x.shape().to_vec(), out).expect("same shape as input");
    (xhat, out)
}

/// Tape node; inputs are `[x, gamma, beta]`.
pub struct BatchNormBackward {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl Backward for BatchNormBackward {
    fn name(&self) -> &'static str {
        "batchnorm"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        let (x, gamma) = (inputs[0], inputs[1]);
        let (n, c, sp) = layout(x)?;
        let m = (n * sp) as f64;
        let g = grad_out.data();
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for (i, (gc, xc)) in g.chunks_exact(sp).zip(self.xhat.chunks_exact(sp)).enumerate() {
            let p = i % c;
            dbeta[p] += gc.iter().sum::<f64>();
            dgamma[p] += gc.iter().zip(xc).map(|(a, b)| a * b).sum::<f64>();
        }
        let mut dx = vec![0.0; x.len()];
        for (i, ((dc, gc), xc)) in dx
            .chunks_exact_mut(sp)
            .zip(g.chunks_exact(sp))
            .zip(self.xhat.chunks_exact(sp))
            .enumerate()
        {
            let p = i % c;
            let scale = gamma.data()[p] * self.inv_std[p];
            if self.batch_stats {
                for ((d, &gv), &xh) in dc.iter_mut().zip(gc).zip(xc) {
                    *d = scale * (gv - dbeta[p] / m - xh * dgamma[p] / m);
                }
            } else {
                for (d, &gv) in dc.iter_mut().zip(gc) {
                    *d = scale * gv;
                }
            }
        }
        Ok(vec![
            Tensor::new(x.shape().to_vec(), dx)?,
            Tensor::vector(dgamma),
            Tensor::vector(dbeta),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_plane_outputs_shift() {
        let x = Tensor::full(&[4, 1, 3], 2.5);
        let pass = batchnorm_train(&x, &Tensor::vector(vec![1.7]), &Tensor::vector(vec![0.3]), EPSILON)
            .unwrap();
        assert!(pass.output.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn standardized_batch_passes_through() {
        // Two samples, values +-1: mean 0, biased variance 1.
        let x = Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap();
        let pass = batchnorm_train(&x, &Tensor::vector(vec![1.0]), &Tensor::vector(vec![0.0]), 0.0)
            .unwrap();
        for (a, b) in pass.output.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn random_batch_is_standardized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (n, c, sp) = (8, 3, 5);
        let data: Vec<f64> = (0..n * c * sp).map(|_| rng.random_range(-4.0..9.0)).collect();
        let x = Tensor::new(vec![n, c, 1, sp], data).unwrap();
        let ones = Tensor::full(&[c], 1.0);
        let zeros = Tensor::zeros(&[c]);
        let pass = batchnorm_train(&x, &ones, &zeros, EPSILON).unwrap();
        for p in 0..c {
            let vals: Vec<f64> = (0..n)
                .flat_map(|b| pass.output.data()[(b * c + p) * sp..(b * c + p + 1) * sp].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn single_sample_batch_rejected() {
        let x = Tensor::zeros(&[1, 2, 3]);
        let r = batchnorm_train(&x, &Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), EPSILON);
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
