use super::config::{OptimizerKind, TrainConfig};
use crate::numerics::Tensor;

const ADAM_EPS: f64 = 1e-8;

pub(crate) struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub(crate) fn new(config: &TrainConfig, params: &[&Tensor]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.len()]).collect();
        Optimizer {
            kind: config.optimizer,
            lr: config.lr,
            beta1: config.momentum,
            beta2: config.beta2,
            step: 0,
            first: zeros(),
            second: match config.optimizer {
                OptimizerKind::Adam => zeros(),
                OptimizerKind::Sgd => Vec::new(),
            },
        }
    }

    pub(crate) fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        self.step += 1;
        let (lr, b1, b2) = (self.lr, self.beta1, self.beta2);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let v = &mut self.first[i];
            match self.kind {
                OptimizerKind::Sgd => {
                    for ((p, v), g) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(g.data()) {
                        *v = b1 * *v + g;
                        *p -= lr * *v;
                    }
                }
                OptimizerKind::Adam => {
                    let s = &mut self.second[i];
                    let c1 = 1.0 - b1.powi(self.step);
                    let c2 = 1.0 - b2.powi(self.step);
                    for (((p, m), s), g) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(s.iter_mut()).zip(g.data()) {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *s = b2 * *s + (1.0 - b2) * g * g;
                        *p -= lr * (*m / c1) / ((*s / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}
