use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::optim::Optimizer;
use super::{EpochMetrics, TrainReport};
use crate::augment::expand_training_set;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::layers::loss::MseBackward;
use crate::layers::{mse_loss, FeatureExtractorModel, Mode};
use crate::mdn;
use crate::numerics::{Tape, Tensor};
use crate::seed::{self, Stream};
use crate::walsh::WalshCodebook;

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Per-sample sum of squared errors, averaged over samples.
    pub mean_loss: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub correct: usize,
    pub total: usize,
}

fn check_compatible(model: &FeatureExtractorModel, data: &LabeledDataset, codebook: &WalshCodebook) -> Result<()> {
    if model.output_dim() != codebook.rank() {
        return Err(Error::Wiring(format!(
            "model emits {} features, codebook rank is {}",
            model.output_dim(),
            codebook.rank()
        )));
    }
    if data.class_count() > codebook.class_count() {
        return Err(Error::contract(format!(
            "dataset has {} classes, codebook covers {}",
            data.class_count(),
            codebook.class_count()
        )));
    }
    let expected = model.input_shape().sample_shape();
    if let Some(s) = data.sample_shape() {
        if s != expected.as_slice() {
            return Err(Error::Wiring(format!("samples have shape {s:?}, model expects {expected:?}")));
        }
    }
    Ok(())
}

/// Inference-mode feature vectors, one per sample.
pub fn feature_outputs(model: &FeatureExtractorModel, data: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
    let m = model.output_dim();
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.samples().chunks(EVAL_CHUNK) {
        let refs: Vec<&Tensor> = chunk.iter().collect();
        let y = model.predict(&model.batch(&refs)?)?;
        out.extend(y.data().chunks(m).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// MDN classification of every sample against the codebook.
pub fn evaluate(model: &FeatureExtractorModel, data: &LabeledDataset, codebook: &WalshCodebook) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate an empty dataset"));
    }
    check_compatible(model, data, codebook)?;
    let c = codebook.class_count();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut loss = 0.0;
    let mut correct = 0;
    for (o, &label) in feature_outputs(model, data)?.iter().zip(data.labels()) {
        let d = mdn::distances(o, codebook)?;
        loss += d.distances[label];
        confusion[label][d.argmin] += 1;
        correct += usize::from(d.argmin == label);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        mean_loss: loss / data.len() as f64,
        confusion,
        correct,
        total: data.len(),
    })
}

fn batches(order: &[usize], size: usize, merge_singleton: bool) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if merge_singleton && out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("len > 1") = &order[start..];
    }
    out
}

/// Minibatch gradient descent on the summed squared error to each sample's
/// Walsh target. Stops at `config.epochs` or when validation loss has not
/// improved for `config.patience` epochs, then restores the best-validation
/// weights. An empty validation set falls back to the training set.
pub fn fit(
    model: &mut FeatureExtractorModel,
    train: &LabeledDataset,
    validation: &LabeledDataset,
    codebook: &WalshCodebook,
    config: &TrainConfig,
) -> Result<TrainReport> {
    fit_observed(model, train, validation, codebook, config, &mut |_| {})
}

pub fn fit_observed(
    model: &mut FeatureExtractorModel,
    train: &LabeledDataset,
    validation: &LabeledDataset,
    codebook: &WalshCodebook,
    config: &TrainConfig,
    observe: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainReport> {
    let started = Instant::now();
    config.validate()?;
    if codebook.class_count() < 2 || train.class_histogram().iter().filter(|&&n| n > 0).count() < 2 {
        return Err(Error::InsufficientData("training needs samples from at least 2 classes".into()));
    }
    check_compatible(model, train, codebook)?;
    check_compatible(model, validation, codebook)?;
    let bn = model.has_batchnorm();
    if bn && config.batch < 2 {
        return Err(Error::contract("batch normalization needs batches of at least 2"));
    }
    let augmented;
    let train = match &config.augment {
        Some(a) if a.factor > 1 => {
            augmented = expand_training_set(train, a)?;
            &augmented
        }
        _ => train,
    };
    let validation = if validation.is_empty() { train } else { validation };

    let mut optimizer = Optimizer::new(config, &model.params());
    let mut dropout_rng = seed::rng(config.seed, Stream::Dropout);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, FeatureExtractorModel)> = None;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        model.set_mode(Mode::Training);
        order.shuffle(&mut seed::rng_indexed(config.seed, Stream::Shuffle, epoch as u64));
        let mut epoch_loss = 0.0;
        for (b, idx) in batches(&order, config.batch, bn).into_iter().enumerate() {
            let samples: Vec<&Tensor> = idx.iter().map(|&i| &train.samples()[i]).collect();
            let targets: Vec<f64> = idx
                .iter()
                .flat_map(|&i| codebook.target(train.labels()[i]).iter().copied())
                .collect();
            let mut tape = Tape::new();
            let x = tape.leaf(model.batch(&samples)?);
            let pass = model.forward(&mut tape, x, &mut dropout_rng)?;
            let target = tape.leaf(Tensor::new(vec![idx.len(), codebook.rank()], targets)?);
            let loss = mse_loss(tape.value(pass.output), tape.value(target))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1, loss });
            }
            let loss_var = tape.push(Tensor::scalar(loss), &[pass.output, target], Box::new(MseBackward));
            let mut grads = tape.backward(loss_var)?;
            let g: Vec<Tensor> = pass.params.iter().map(|&p| grads.take(p)).collect();
            optimizer.step(model.params_mut(), &g);
            epoch_loss += loss;
        }
        model.set_mode(Mode::Inference);
        let val = evaluate(model, validation, codebook)?;
        if !val.mean_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: 0, loss: val.mean_loss });
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_loss: val.mean_loss,
            val_accuracy: val.accuracy,
        };
        observe(&metrics);
        history.push(metrics);
        let improved = best.as_ref().is_none_or(|(l, _, _)| val.mean_loss < *l);
        if improved {
            best = Some((val.mean_loss, epoch, model.clone()));
        } else if config.patience > 0 && epoch - best.as_ref().map_or(0, |b| b.1) >= config.patience {
            stopped_early = true;
            break;
        }
    }
    let best_epoch = match best {
        Some((_, e, m)) => {
            *model = m;
            e
        }
        None => 0,
    };
    model.set_mode(Mode::Inference);
    Ok(TrainReport {
        epochs_run: history.len(),
        epochs: history,
        best_epoch,
        stopped_early,
        test_accuracy: None,
        test_divergence: None,
        weight_count: model.weight_count(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        growth: Vec::new(),
    })
}
