use crate::error::Result;
use crate::numerics::{Backward, Tensor};

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Passes the adjoint where the input was strictly positive.
pub struct ReluBackward;

impl Backward for ReluBackward {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        let mut g = grad_out.clone();
        for (gv, &x) in g.data_mut().iter_mut().zip(inputs[0].data()) {
            if x <= 0.0 {
                *gv = 0.0;
            }
        }
        Ok(vec![g])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let y = relu_forward(&Tensor::vector(vec![-1.0, 2.0, 0.0]));
        assert_eq!(y.data(), &[0.0, 2.0, 0.0]);
        assert_eq!(relu_forward(&Tensor::vector(vec![-3.0, -0.1])).data(), &[0.0, 0.0]);
        let pos = Tensor::vector(vec![0.2, 7.0]);
        assert_eq!(relu_forward(&pos), pos);
    }

    #[test]
    fn gradient_at_zero_is_zero() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        let g = ReluBackward
            .backward(&Tensor::full(&[3], 1.0), &[&x], &relu_forward(&x))
            .unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0, 1.0]);
    }
}
