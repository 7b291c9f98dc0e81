use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::batchnorm::{self, BatchNormBackward};
use super::{
    activation::ReluBackward, conv::ConvBackward, dense::DenseBackward, dropout::DropoutBackward,
    pool::MaxPoolBackward, BatchNormLayer, ConvLayer, DenseLayer, FlattenBackward, Layer, LayerSpec,
};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Shape of one input sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputShape {
    /// 1D signal of the given length (sample tensors of shape `[len]`).
    Signal(usize),
    /// 2D image (sample tensors of shape `[h, w]`).
    Image(usize, usize),
}

impl InputShape {
    pub fn sample_shape(&self) -> Vec<usize> {
        match *self {
            InputShape::Signal(l) => vec![l],
            InputShape::Image(h, w) => vec![h, w],
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, InputShape::Image(..))
    }

    fn map_dims(&self) -> (usize, usize) {
        match *self {
            InputShape::Signal(l) => (1, l),
            InputShape::Image(h, w) => (h, w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Per-sample activation shape during wiring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

/// Output of a taped forward pass.
pub struct ForwardPass {
    pub output: Var,
    /// One entry per tensor of [`FeatureExtractorModel::params`], same order.
    pub params: Vec<Var>,
}

/// The convolutional feature extractor: an ordered layer stack whose
/// flattened output has one entry per Walsh code position.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractorModel {
    input: InputShape,
    layers: Vec<Layer>,
    output_dim: usize,
    mode: Mode,
}

fn wire(input: InputShape, specs: &[LayerSpec]) -> Result<Vec<Act>> {
    let (h, w) = input.map_dims();
    let two_d = input.is_image();
    let mut act = Act::Map { c: 1, h, w };
    let mut acts = Vec::with_capacity(specs.len() + 1);
    acts.push(act);
    for (i, spec) in specs.iter().enumerate() {
        let at = |msg: String| Error::Wiring(format!("layer {} ({spec}): {msg}", i + 1));
        act = match (*spec, act) {
            (LayerSpec::Conv1d { filter_len, planes }, Act::Map { h, w, .. }) => {
                if two_d {
                    return Err(at("conv1d on a 2D input".into()));
                }
                if filter_len == 0 || planes == 0 {
                    return Err(at("filter length and planes must be at least 1".into()));
                }
                if filter_len > w {
                    return Err(at(format!("filter {filter_len} longer than input {w}")));
                }
                Act::Map {
                    c: planes,
                    h,
                    w: w - filter_len + 1,
                }
            }
            (
                LayerSpec::Conv2d {
                    filter_h,
                    filter_w,
                    planes,
                },
                Act::Map { h, w, .. },
            ) => {
                if !two_d {
                    return Err(at("conv2d on a 1D input".into()));
                }
                if filter_h == 0 || filter_w == 0 || planes == 0 {
                    return Err(at("filter extents and planes must be at least 1".into()));
                }
                if filter_h > h || filter_w > w {
                    return Err(at(format!("filter {filter_h}x{filter_w} larger than input {h}x{w}")));
                }
                Act::Map {
                    c: planes,
                    h: h - filter_h + 1,
                    w: w - filter_w + 1,
                }
            }
            (LayerSpec::MaxPool { window }, Act::Map { c, h, w }) => {
                let wh = if two_d { window } else { 1 };
                if window == 0 || h % wh != 0 || w % window != 0 {
                    return Err(at(format!("window {window} does not divide map {h}x{w}")));
                }
                Act::Map {
                    c,
                    h: h / wh,
                    w: w / window,
                }
            }
            (LayerSpec::Dropout { rate }, a) => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(at(format!("dropout rate {rate} outside [0, 1)")));
                }
                a
            }
            (LayerSpec::BatchNorm | LayerSpec::Relu, a) => a,
            (LayerSpec::Flatten, Act::Map { c, h, w }) => Act::Flat(c * h * w),
            (LayerSpec::Flatten, a @ Act::Flat(_)) => a,
            (LayerSpec::Dense { out_dim }, Act::Flat(_)) => {
                if out_dim == 0 {
                    return Err(at("dense output must be at least 1".into()));
                }
                Act::Flat(out_dim)
            }
            (_, Act::Flat(_)) => return Err(at("needs a feature map, input already flattened".into())),
            (LayerSpec::Dense { .. }, Act::Map { .. }) => {
                return Err(at("dense needs a flattened input".into()))
            }
        };
        acts.push(act);
    }
    Ok(acts)
}

fn output_len(acts: &[Act]) -> Result<usize> {
    match acts.last() {
        Some(Act::Flat(n)) => Ok(*n),
        _ => Err(Error::Wiring("model must end with flatten or dense".into())),
    }
}

/// Feature-map extent `(planes, h, w)` after `specs`, or `None` once flattened.
pub fn map_after(input: InputShape, specs: &[LayerSpec]) -> Result<Option<(usize, usize, usize)>> {
    Ok(match wire(input, specs)?.last() {
        Some(Act::Map { c, h, w }) => Some((*c, *h, *w)),
        _ => None,
    })
}

fn he_normal(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect())
        .expect("shape from wiring")
}

impl FeatureExtractorModel {
    /// Validates the wiring and initializes parameters: He-normal weights
    /// (std `sqrt(2 / fan_in)`), zero biases, unit batch-norm scale.
    pub fn build(input: InputShape, specs: &[LayerSpec], output_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let acts = wire(input, specs)?;
        let out = output_len(&acts)?;
        if out != output_dim {
            return Err(Error::Wiring(format!(
                "model emits {out} features, codebook rank is {output_dim}"
            )));
        }
        let two_d = input.is_image();
        let mut layers = Vec::with_capacity(specs.len());
        for (spec, act) in specs.iter().zip(&acts) {
            let in_planes = match *act {
                Act::Map { c, .. } => c,
                Act::Flat(n) => n,
            };
            layers.push(match *spec {
                LayerSpec::Conv1d { filter_len, planes } => Layer::Conv(ConvLayer {
                    two_d: false,
                    weight: he_normal(&[planes, in_planes, 1, filter_len], in_planes * filter_len, rng),
                    bias: Tensor::zeros(&[planes]),
                }),
                LayerSpec::Conv2d {
                    filter_h,
                    filter_w,
                    planes,
                } => Layer::Conv(ConvLayer {
                    two_d: true,
                    weight: he_normal(
                        &[planes, in_planes, filter_h, filter_w],
                        in_planes * filter_h * filter_w,
                        rng,
                    ),
                    bias: Tensor::zeros(&[planes]),
                }),
                LayerSpec::MaxPool { window } => Layer::MaxPool { window, two_d },
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNormLayer::new(in_planes)),
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { out_dim } => Layer::Dense(DenseLayer {
                    weight: he_normal(&[out_dim, in_planes], in_planes, rng),
                    bias: Tensor::zeros(&[out_dim]),
                }),
            });
        }
        Ok(FeatureExtractorModel {
            input,
            layers,
            output_dim,
            mode: Mode::Training,
        })
    }

    /// Assembles a model from layers with existing state, re-checking the
    /// wiring and every parameter shape.
    pub fn from_layers(input: InputShape, layers: Vec<Layer>, output_dim: usize) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        let acts = wire(input, &specs)?;
        let out = output_len(&acts)?;
        if out != output_dim {
            return Err(Error::Wiring(format!(
                "model emits {out} features, codebook rank is {output_dim}"
            )));
        }
        for (i, (layer, act)) in layers.iter().zip(&acts).enumerate() {
            let in_planes = match *act {
                Act::Map { c, .. } => c,
                Act::Flat(n) => n,
            };
            let ok = match layer {
                Layer::Conv(c) => {
                    c.two_d == input.is_image()
                        && c.weight.shape()[1] == in_planes
                        && c.bias.shape() == [c.weight.shape()[0]]
                        && c.weight.rank() == 4
                }
                Layer::BatchNorm(b) => {
                    b.gamma.shape() == [in_planes]
                        && b.beta.shape() == [in_planes]
                        && b.running_mean.len() == in_planes
                        && b.running_var.len() == in_planes
                }
                Layer::Dense(d) => {
                    d.weight.shape()[1] == in_planes && d.bias.shape() == [d.weight.shape()[0]]
                }
                Layer::MaxPool { two_d, .. } => *two_d == input.is_image(),
                _ => true,
            };
            if !ok {
                return Err(Error::Wiring(format!(
                    "layer {} ({}) parameters do not fit its input",
                    i + 1,
                    layer.spec()
                )));
            }
        }
        Ok(FeatureExtractorModel {
            input,
            layers,
            output_dim,
            mode: Mode::Training,
        })
    }

    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    pub fn conv_depth(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::Conv(_))).count()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// Connection weights (filters and dense matrices), excluding biases and
    /// normalization parameters.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(Layer::weight_count).sum()
    }

    /// Every learned scalar, biases and normalization scale/shift included.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Stacks samples into a `[N, 1, H, W]` batch after checking their shape.
    pub fn batch(&self, samples: &[&Tensor]) -> Result<Tensor> {
        let expected = self.input.sample_shape();
        for s in samples {
            if s.shape() != expected.as_slice() {
                return Err(Error::shape(format!(
                    "sample shape {:?}, model expects {expected:?}",
                    s.shape()
                )));
            }
        }
        let (h, w) = self.input.map_dims();
        Tensor::stack(samples)?.reshape(vec![samples.len(), 1, h, w])
    }

    /// Inference-mode forward pass (running batch-norm statistics, no
    /// dropout) returning `[N, M]` features. Does not touch the model.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut x = batch.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => super::conv_forward(&x, &c.weight, &c.bias)?,
                Layer::MaxPool { window, two_d } => {
                    super::maxpool_forward(&x, if *two_d { *window } else { 1 }, *window)?.0
                }
                Layer::BatchNorm(b) => {
                    batchnorm::batchnorm_infer(
                        &x,
                        &b.gamma,
                        &b.beta,
                        &b.running_mean,
                        &b.running_var,
                        batchnorm::EPSILON,
                    )?
                    .0
                }
                Layer::Dropout { .. } => x,
                Layer::Relu => super::relu_forward(&x),
                Layer::Flatten => super::flatten(&x),
                Layer::Dense(d) => super::dense_forward(&x, &d.weight, &d.bias)?,
            };
        }
        Ok(x)
    }

    /// Forward pass recorded on `tape`, honoring the model's mode. In
    /// training mode batch-norm layers use batch statistics and update their
    /// running averages; dropout draws from `rng`.
    pub fn forward(&mut self, tape: &mut Tape, x: Var, rng: &mut impl Rng) -> Result<ForwardPass> {
        let params: Vec<Var> = self.params().into_iter().map(|p| tape.leaf(p.clone())).collect();
        let output = self.forward_with(tape, x, &params, rng)?;
        Ok(ForwardPass { output, params })
    }

    /// Like [`forward`](Self::forward), but reads the parameters from
    /// existing tape variables (one per [`params`](Self::params) tensor).
    pub fn forward_with(&mut self, tape: &mut Tape, x: Var, params: &[Var], rng: &mut impl Rng) -> Result<Var> {
        let expected = self.params().len();
        if params.len() != expected {
            return Err(Error::contract(format!(
                "forward_with got {} parameter variables, model has {expected}",
                params.len()
            )));
        }
        let training = self.mode == Mode::Training;
        let mut cur = x;
        let mut next_param = params.iter().copied();
        let mut take = || next_param.next().expect("counted above");
        for layer in &mut self.layers {
            cur = match layer {
                Layer::Conv(_) => {
                    let (w, b) = (take(), take());
                    let y = super::conv_forward(tape.value(cur), tape.value(w), tape.value(b))?;
                    tape.push(y, &[cur, w, b], Box::new(ConvBackward))
                }
                Layer::MaxPool { window, two_d } => {
                    let (y, argmax) =
                        super::maxpool_forward(tape.value(cur), if *two_d { *window } else { 1 }, *window)?;
                    tape.push(y, &[cur], Box::new(MaxPoolBackward { argmax }))
                }
                Layer::BatchNorm(b) => {
                    let (g, be) = (take(), take());
                    let (xv, gv, bv) = (tape.value(cur), tape.value(g), tape.value(be));
                    let (y, op): (Tensor, BatchNormBackward) = if training {
                        let pass = batchnorm::batchnorm_train(xv, gv, bv, batchnorm::EPSILON)?;
                        let count = (xv.len() / b.planes()) as f64;
                        let unbias = count / (count - 1.0);
                        let m = batchnorm::MOMENTUM;
                        for p in 0..b.planes() {
                            b.running_mean[p] = m * b.running_mean[p] + (1.0 - m) * pass.mean[p];
                            b.running_var[p] = m * b.running_var[p] + (1.0 - m) * pass.var[p] * unbias;
                        }
                        (pass.output, pass.backward)
                    } else {
                        batchnorm::batchnorm_infer(
                            xv,
                            gv,
                            bv,
                            &b.running_mean,
                            &b.running_var,
                            batchnorm::EPSILON,
                        )?
                    };
                    tape.push(y, &[cur, g, be], Box::new(op))
                }
                Layer::Dropout { rate } => {
                    let (y, mask) = super::dropout_forward(tape.value(cur), *rate, rng, training)?;
                    tape.push(y, &[cur], Box::new(DropoutBackward { mask }))
                }
                Layer::Relu => {
                    let y = super::relu_forward(tape.value(cur));
                    tape.push(y, &[cur], Box::new(ReluBackward))
                }
                Layer::Flatten => {
                    let y = super::flatten(tape.value(cur));
                    tape.push(y, &[cur], Box::new(FlattenBackward))
                }
                Layer::Dense(_) => {
                    let (w, b) = (take(), take());
                    let y = super::dense_forward(tape.value(cur), tape.value(w), tape.value(b))?;
                    tape.push(y, &[cur, w, b], Box::new(DenseBackward))
                }
            };
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn wiring_rejects_wrong_output_length() {
        let specs = [
            LayerSpec::Conv1d { filter_len: 2, planes: 8 },
            LayerSpec::Flatten,
        ];
        let err = FeatureExtractorModel::build(InputShape::Signal(4), &specs, 16, &mut rng()).unwrap_err();
        assert!(matches!(err, Error::Wiring(_)));
    }

    #[test]
    fn wiring_rejects_oversized_filter_and_bad_pool() {
        let specs = [LayerSpec::Conv1d { filter_len: 5, planes: 16 }, LayerSpec::Flatten];
        assert!(FeatureExtractorModel::build(InputShape::Signal(4), &specs, 16, &mut rng()).is_err());
        let specs = [
            LayerSpec::Conv1d { filter_len: 2, planes: 16 },
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Flatten,
        ];
        assert!(FeatureExtractorModel::build(InputShape::Signal(4), &specs, 16, &mut rng()).is_err());
        let specs = [LayerSpec::Conv1d { filter_len: 4, planes: 16 }];
        assert!(FeatureExtractorModel::build(InputShape::Signal(4), &specs, 16, &mut rng()).is_err());
    }

    #[test]
    fn counts_weights_and_params() {
        let specs = [
            LayerSpec::Conv2d { filter_h: 3, filter_w: 3, planes: 4 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Conv2d { filter_h: 2, filter_w: 2, planes: 8 },
            LayerSpec::Flatten,
        ];
        let m = FeatureExtractorModel::build(InputShape::Image(6, 6), &specs, 8, &mut rng()).unwrap();
        assert_eq!(m.weight_count(), 36 + 4 * 4 * 8);
        assert_eq!(m.param_count(), 36 + 4 + 8 + 128 + 8);
        assert_eq!(m.specs(), specs.to_vec());
    }

    #[test]
    fn predict_matches_taped_inference_forward() {
        let specs = [
            LayerSpec::Conv1d { filter_len: 3, planes: 4 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Conv1d { filter_len: 6, planes: 8 },
            LayerSpec::Flatten,
        ];
        let mut m = FeatureExtractorModel::build(InputShape::Signal(8), &specs, 8, &mut rng()).unwrap();
        m.set_mode(Mode::Inference);
        let samples: Vec<Tensor> = (0..3)
            .map(|i| Tensor::vector((0..8).map(|j| ((i * 8 + j) as f64).sin()).collect()))
            .collect();
        let refs: Vec<&Tensor> = samples.iter().collect();
        let batch = m.batch(&refs).unwrap();
        let direct = m.predict(&batch).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(batch);
        let pass = m.forward(&mut tape, x, &mut rng()).unwrap();
        assert_eq!(tape.value(pass.output), &direct);
        assert_eq!(direct.shape(), &[3, 8]);
    }

    #[test]
    fn batch_checks_sample_shape() {
        let specs = [LayerSpec::Conv1d { filter_len: 4, planes: 4 }, LayerSpec::Flatten];
        let m = FeatureExtractorModel::build(InputShape::Signal(4), &specs, 4, &mut rng()).unwrap();
        let bad = Tensor::vector(vec![0.0; 5]);
        assert!(m.batch(&[&bad]).is_err());
    }
}
