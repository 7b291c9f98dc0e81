use crate::error::{Error, Result};
use crate::numerics::gemm::{gemm, MatRef};
use crate::numerics::{Backward, Tensor};

fn dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let (xs, ws) = (input.shape(), weight.shape());
    if xs.len() != 2 || ws.len() != 2 || ws[1] != xs[1] || bias.shape() != [ws[0]] {
        return Err(Error::shape(format!(
            "dense: input {xs:?}, weights {ws:?}, bias {:?}",
            bias.shape()
        )));
    }
    Ok((xs[0], xs[1], ws[0]))
}

/// `y[n] = W x[n] + b` for an `[N, in]` batch and `[out, in]` weights.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, fan_in, out) = dims(input, weight, bias)?;
    let mut y: Vec<f64> = (0..n).flat_map(|_| bias.data().iter().copied()).collect();
    gemm(
        MatRef::new(input.data(), n, fan_in),
        MatRef::new(weight.data(), out, fan_in).t(),
        1.0,
        &mut y,
    );
    Tensor::new(vec![n, out], y)
}

/// Tape node; inputs are `[input, weight, bias]`.
pub struct DenseBackward;

impl Backward for DenseBackward {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
        let (n, fan_in, out) = dims(x, w, b)?;
        let g = MatRef::new(grad_out.data(), n, out);
        let mut gx = vec![0.0; n * fan_in];
        gemm(g, MatRef::new(w.data(), out, fan_in), 0.0, &mut gx);
        let mut gw = vec![0.0; out * fan_in];
        gemm(g.t(), MatRef::new(x.data(), n, fan_in), 0.0, &mut gw);
        let mut gb = vec![0.0; out];
        for row in grad_out.data().chunks_exact(out) {
            gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        Ok(vec![
            Tensor::new(x.shape().to_vec(), gx)?,
            Tensor::new(w.shape().to_vec(), gw)?,
            Tensor::vector(gb),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_bias_only() {
        let x = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let eye = Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        assert_eq!(dense_forward(&x, &eye, &Tensor::zeros(&[3])).unwrap(), x);
        let b = Tensor::vector(vec![0.1, 0.2]);
        let y = dense_forward(&x, &Tensor::zeros(&[2, 3]), &b).unwrap();
        assert_eq!(y.data(), &[0.1, 0.2]);
    }

    #[test]
    fn agrees_with_matvec() {
        let w = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 0.5, 0.25, -0.75]).unwrap();
        let b = Tensor::vector(vec![1.0, -1.0]);
        let x = Tensor::vector(vec![2.0, 1.0, -1.0]);
        let expected = w.matvec(&x).unwrap().add(&b).unwrap();
        let y = dense_forward(&x.clone().reshape(vec![1, 3]).unwrap(), &w, &b).unwrap();
        for (a, e) in y.data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn mismatch_rejected() {
        let x = Tensor::zeros(&[1, 4]);
        assert!(dense_forward(&x, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2])).is_err());
    }
}
