use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Backward, Tensor};

pub const DEFAULT_RATE: f64 = 0.25;

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::contract(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. In training each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise identity.
/// Returns the output and the per-element multiplier applied.
pub fn dropout_forward(
    input: &Tensor,
    rate: f64,
    rng: &mut impl Rng,
    training: bool,
) -> Result<(Tensor, Vec<f64>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((input.clone(), vec![1.0; input.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::new(input.shape().to_vec(), data)?, mask))
}

pub struct DropoutBackward {
    pub mask: Vec<f64>,
}

impl Backward for DropoutBackward {
    fn name(&self) -> &'static str {
        "dropout"
    }

    fn backward(&self, grad_out: &Tensor, _: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        let mut g = grad_out.clone();
        for (v, m) in g.data_mut().iter_mut().zip(&self.mask) {
            *v *= m;
        }
        Ok(vec![g])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identity_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        assert_eq!(dropout_forward(&x, 0.0, &mut rng, true).unwrap().0, x);
        assert_eq!(dropout_forward(&x, 0.9, &mut rng, false).unwrap().0, x);
    }

    #[test]
    fn rate_out_of_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::vector(vec![1.0]);
        assert!(matches!(dropout_forward(&x, 1.0, &mut rng, true), Err(Error::Contract(_))));
        assert!(dropout_forward(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn survivor_fraction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::full(&[100_000], 1.0);
        let (y, _) = dropout_forward(&x, 0.5, &mut rng, true).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        assert!((kept - 0.5).abs() < 0.01, "{kept}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
