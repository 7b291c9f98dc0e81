use crate::error::{Error, Result};
use crate::numerics::{Backward, Tensor};

/// Plain sum of squared differences (not the mean).
pub fn mse_loss(output: &Tensor, target: &Tensor) -> Result<f64> {
    if output.len() != target.len() {
        return Err(Error::shape(format!(
            "loss: output of {} values vs target of {}",
            output.len(),
            target.len()
        )));
    }
    Ok(output
        .data()
        .iter()
        .zip(target.data())
        .map(|(o, t)| (o - t) * (o - t))
        .sum())
}

/// Tape node; inputs are `[output, target]`.
pub struct MseBackward;

impl Backward for MseBackward {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        let s = grad_out.data()[0];
        let (o, t) = (inputs[0], inputs[1]);
        let d: Vec<f64> = o
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| 2.0 * s * (a - b))
            .collect();
        let go = Tensor::new(o.shape().to_vec(), d)?;
        let gt = go.scale(-1.0).reshape(t.shape().to_vec())?;
        Ok(vec![go, gt])
    }
}
