//! Central finite-difference gradient checks.
//!
//! The scalar probed is `sum(r * f(inputs))` for a fixed random projection
//! `r`. The numeric side only evaluates forward values, so it stays
//! independent of every `Backward` implementation it checks.

use rand::{seq::SliceRandom, Rng, SeedableRng};

use crate::error::Result;
use crate::layers::{
    activation::ReluBackward, batchnorm, conv::ConvBackward, dense::DenseBackward,
    dropout::DropoutBackward, loss::MseBackward, pool::MaxPoolBackward,
};
use crate::numerics::{Tape, Tensor, Var};
use crate::seed::Rng as SeededRng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Worst error seen across every input element.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_error: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_error < TOLERANCE
    }
}

/// Compares taped gradients of `build` against central differences for
/// every element of every input. Error per element is
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn check<F>(inputs: &[Tensor], build: F, rng: &mut impl Rng) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let probe = |xs: &[Tensor]| -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).clone())
    };
    let out_shape = probe(inputs)?.shape().to_vec();
    let n: usize = out_shape.iter().product();
    let r = Tensor::new(out_shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let rv = tape.leaf(r.clone());
    let weighted = tape.mul(out, rv)?;
    let loss = tape.sum(weighted);
    let grads = tape.backward(loss)?;

    let objective = |xs: &[Tensor]| -> Result<f64> { Ok(probe(xs)?.mul(&r)?.sum()) };
    let mut max_error = 0.0f64;
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + STEP;
            let up = objective(&work)?;
            work[i].data_mut()[j] = orig - STEP;
            let down = objective(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = (analytic.data()[j] - numeric).abs() / numeric.abs().max(1.0);
            max_error = max_error.max(err);
            checked += 1;
        }
    }
    Ok(GradCheck { max_error, checked })
}

/// Layer kinds covered by [`check_layer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv1d,
    Conv2d,
    MaxPool,
    BatchNorm,
    Dense,
    Relu,
    Mse,
    Dropout,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv1d,
        LayerKind::Conv2d,
        LayerKind::MaxPool,
        LayerKind::BatchNorm,
        LayerKind::Dense,
        LayerKind::Relu,
        LayerKind::Mse,
        LayerKind::Dropout,
    ];
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Values bounded away from zero so a finite-difference step never crosses
/// the ReLU kink.
fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(0.05..1.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// A random configuration of `kind` (shapes and values drawn from `seed`),
/// checked with [`check`].
pub fn check_layer(kind: LayerKind, seed: u64) -> Result<GradCheck> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let n = rng.random_range(1..=3usize);
    match kind {
        LayerKind::Conv1d | LayerKind::Conv2d => {
            let c = rng.random_range(1..=3usize);
            let o = rng.random_range(1..=3usize);
            let (h, kh) = if kind == LayerKind::Conv2d {
                let h = rng.random_range(2..=6usize);
                (h, rng.random_range(1..=h))
            } else {
                (1, 1)
            };
            let w = rng.random_range(2..=7usize);
            let kw = rng.random_range(1..=w);
            let inputs = vec![
                uniform(&[n, c, h, w], -1.0, 1.0, &mut rng),
                uniform(&[o, c, kh, kw], -1.0, 1.0, &mut rng),
                uniform(&[o], -1.0, 1.0, &mut rng),
            ];
            check(
                &inputs,
                |tape, v| {
                    let y = crate::layers::conv_forward(tape.value(v[0]), tape.value(v[1]), tape.value(v[2]))?;
                    Ok(tape.push(y, v, Box::new(ConvBackward)))
                },
                &mut rng,
            )
        }
        LayerKind::MaxPool => {
            let c = rng.random_range(1..=2usize);
            let win = rng.random_range(1..=3usize);
            let (ho, wo) = (rng.random_range(1..=3usize), rng.random_range(1..=3usize));
            let shape = [n, c, ho * win, wo * win];
            let len: usize = shape.iter().product();
            // Distinct values spaced 0.01 apart: no ties within a step.
            let mut vals: Vec<f64> = (0..len).map(|i| i as f64 * 0.01).collect();
            vals.shuffle(&mut rng);
            let inputs = vec![Tensor::new(shape.to_vec(), vals)?];
            check(
                &inputs,
                move |tape, v| {
                    let (y, argmax) = crate::layers::maxpool_forward(tape.value(v[0]), win, win)?;
                    Ok(tape.push(y, v, Box::new(MaxPoolBackward { argmax })))
                },
                &mut rng,
            )
        }
        LayerKind::BatchNorm => {
            let n = rng.random_range(2..=5usize);
            let c = rng.random_range(1..=3usize);
            let sp = rng.random_range(1..=4usize);
            let inputs = vec![
                uniform(&[n, c, 1, sp], -2.0, 2.0, &mut rng),
                uniform(&[c], 0.5, 1.5, &mut rng),
                uniform(&[c], -0.5, 0.5, &mut rng),
            ];
            check(
                &inputs,
                |tape, v| {
                    let pass = batchnorm::batchnorm_train(
                        tape.value(v[0]),
                        tape.value(v[1]),
                        tape.value(v[2]),
                        batchnorm::EPSILON,
                    )?;
                    Ok(tape.push(pass.output, v, Box::new(pass.backward)))
                },
                &mut rng,
            )
        }
        LayerKind::Dense => {
            let fan_in = rng.random_range(1..=6usize);
            let out = rng.random_range(1..=5usize);
            let inputs = vec![
                uniform(&[n, fan_in], -1.0, 1.0, &mut rng),
                uniform(&[out, fan_in], -1.0, 1.0, &mut rng),
                uniform(&[out], -1.0, 1.0, &mut rng),
            ];
            check(
                &inputs,
                |tape, v| {
                    let y = crate::layers::dense_forward(tape.value(v[0]), tape.value(v[1]), tape.value(v[2]))?;
                    Ok(tape.push(y, v, Box::new(DenseBackward)))
                },
                &mut rng,
            )
        }
        LayerKind::Relu => {
            let len = rng.random_range(1..=12usize);
            let inputs = vec![away_from_zero(&[n, len], &mut rng)];
            check(
                &inputs,
                |tape, v| {
                    let y = crate::layers::relu_forward(tape.value(v[0]));
                    Ok(tape.push(y, v, Box::new(ReluBackward)))
                },
                &mut rng,
            )
        }
        LayerKind::Mse => {
            let m = [2usize, 4, 8, 16][rng.random_range(0..4usize)];
            let inputs = vec![
                uniform(&[n, m], -1.0, 2.0, &mut rng),
                uniform(&[n, m], 0.0, 1.0, &mut rng),
            ];
            check(
                &inputs,
                |tape, v| {
                    let l = crate::layers::mse_loss(tape.value(v[0]), tape.value(v[1]))?;
                    Ok(tape.push(Tensor::scalar(l), v, Box::new(MseBackward)))
                },
                &mut rng,
            )
        }
        LayerKind::Dropout => {
            let len = rng.random_range(1..=12usize);
            let rate = rng.random_range(0.0..0.8);
            let mask_seed: u64 = rng.random();
            let inputs = vec![uniform(&[n, len], -1.0, 1.0, &mut rng)];
            check(
                &inputs,
                move |tape, v| {
                    // Same seed on every evaluation: the mask is fixed.
                    let mut mrng = SeededRng::seed_from_u64(mask_seed);
                    let (y, mask) = crate::layers::dropout_forward(tape.value(v[0]), rate, &mut mrng, true)?;
                    Ok(tape.push(y, v, Box::new(DropoutBackward { mask })))
                },
                &mut rng,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes_on_ten_seeds() {
        for kind in LayerKind::ALL {
            for seed in 0..10 {
                let r = check_layer(kind, seed).unwrap();
                assert!(r.passed(), "{kind:?} seed {seed}: {r:?}");
                assert!(r.checked > 0);
            }
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        struct Wrong;
        impl crate::numerics::Backward for Wrong {
            fn name(&self) -> &'static str {
                "wrong"
            }
            fn backward(&self, g: &Tensor, _: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
                Ok(vec![g.scale(1.5)])
            }
        }
        let mut rng = SeededRng::seed_from_u64(0);
        let inputs = vec![Tensor::vector(vec![0.3, -0.2, 0.9])];
        let r = check(
            &inputs,
            |tape, v| {
                let y = tape.value(v[0]).clone();
                Ok(tape.push(y, v, Box::new(Wrong)))
            },
            &mut rng,
        )
        .unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn whole_model_gradient_matches_finite_differences() {
        use crate::layers::{FeatureExtractorModel, InputShape, LayerSpec, Mode};
        let specs = [
            LayerSpec::Conv2d { filter_h: 2, filter_w: 2, planes: 3 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Conv2d { filter_h: 2, filter_w: 2, planes: 4 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out_dim: 4 },
        ];
        let mut rng = SeededRng::seed_from_u64(4);
        let mut model = FeatureExtractorModel::build(InputShape::Image(5, 5), &specs, 4, &mut rng).unwrap();
        model.set_mode(Mode::Training);
        let x = uniform(&[3, 1, 5, 5], -1.0, 1.0, &mut rng);
        let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
        let mut inputs = vec![x];
        inputs.extend(params);
        let template = model.clone();
        let r = check(
            &inputs,
            |tape, v| {
                let mut m = template.clone();
                m.forward_with(tape, v[0], &v[1..], &mut SeededRng::seed_from_u64(0))
            },
            &mut rng,
        )
        .unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.checked > 75);
    }
}
