use super::config::TrainConfig;
use super::fit::{evaluate, fit};
use super::{GrowthStep, TrainReport};
use crate::arch::ModelSpec;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::layers::{map_after, FeatureExtractorModel, InputShape, LayerSpec};
use crate::seed::{self, Stream};
use crate::walsh::WalshCodebook;

#[derive(Debug, Clone)]
pub struct GrowOutcome {
    pub model: FeatureExtractorModel,
    pub spec: ModelSpec,
    pub report: TrainReport,
    /// Whether the returned model beat the threshold (false: best at cap).
    pub accepted: bool,
}

/// Conv lines with the non-conv lines that follow them, up to flatten.
fn blocks(template: &ModelSpec) -> Result<Vec<Vec<LayerSpec>>> {
    let mut out: Vec<Vec<LayerSpec>> = Vec::new();
    for &l in &template.layers {
        match l {
            LayerSpec::Flatten => break,
            LayerSpec::Dense { .. } => {
                return Err(Error::contract("growth templates must end in flatten, not dense"))
            }
            l if l.is_conv() => out.push(vec![l]),
            l => match out.last_mut() {
                Some(b) => b.push(l),
                None => return Err(Error::contract(format!("'{l}' before the first conv layer"))),
            },
        }
    }
    if out.is_empty() {
        return Err(Error::contract("growth template needs at least one conv layer"));
    }
    Ok(out)
}

/// Largest depth the template supports.
pub fn max_depth(template: &ModelSpec) -> Result<usize> {
    Ok(blocks(template)?.len())
}

/// `depth - 1` hidden template blocks, then a head conv spanning the
/// remaining map with one plane per code position, carrying the template's
/// last block's normalization/activation lines.
pub fn spec_at_depth(template: &ModelSpec, depth: usize) -> Result<ModelSpec> {
    let b = blocks(template)?;
    if depth == 0 || depth > b.len() {
        return Err(Error::contract(format!("depth {depth} outside 1..={}", b.len())));
    }
    let mut layers: Vec<LayerSpec> = b[..depth - 1].iter().flatten().copied().collect();
    let planes = template.walsh_rank;
    let head = match (template.input, map_after(template.input, &layers)?) {
        (InputShape::Signal(_), Some((_, _, w))) => LayerSpec::Conv1d { filter_len: w, planes },
        (InputShape::Image(..), Some((_, h, w))) => LayerSpec::Conv2d {
            filter_h: h,
            filter_w: w,
            planes,
        },
        (_, None) => return Err(Error::Wiring("hidden blocks flattened the map".into())),
    };
    layers.push(head);
    let last = b.last().expect("non-empty");
    layers.extend(last[1..].iter().filter(|l| !matches!(l, LayerSpec::MaxPool { .. })));
    layers.push(LayerSpec::Flatten);
    Ok(ModelSpec {
        input: template.input,
        walsh_rank: template.walsh_rank,
        layers,
    })
}

/// Trains depth 1, 2, ... until training accuracy exceeds
/// `config.threshold` (any result is accepted at threshold 0) or the cap is
/// hit, in which case the most accurate depth is returned.
pub fn grow_layers(
    template: &ModelSpec,
    train: &LabeledDataset,
    validation: &LabeledDataset,
    codebook: &WalshCodebook,
    config: &TrainConfig,
) -> Result<GrowOutcome> {
    config.validate()?;
    let cap = config.depth_cap.min(max_depth(template)?);
    let mut history = Vec::new();
    let mut best: Option<GrowOutcome> = None;
    let mut previous: Option<(FeatureExtractorModel, usize)> = None;
    for depth in 1..=cap {
        let spec = spec_at_depth(template, depth)?;
        let mut model = spec.build(&mut seed::rng_indexed(config.seed, Stream::Growth, depth as u64))?;
        let hidden_len = spec.layers.len() - (spec_at_depth(template, 1)?.layers.len());
        if config.keep_weights {
            if let Some((prev, prev_hidden)) = &previous {
                for (dst, src) in model.layers_mut()[..*prev_hidden].iter_mut().zip(prev.layers()) {
                    *dst = src.clone();
                }
            }
        }
        let mut report = fit(&mut model, train, validation, codebook, config)?;
        let train_eval = evaluate(&model, train, codebook)?;
        let val_accuracy = report
            .best_epoch
            .checked_sub(1)
            .and_then(|i| report.epochs.get(i))
            .map_or(f64::NAN, |m| m.val_accuracy);
        history.push(GrowthStep {
            depth,
            train_accuracy: train_eval.accuracy,
            val_accuracy,
            weight_count: model.weight_count(),
            epochs_run: report.epochs_run,
        });
        let accepted = config.threshold <= 0.0 || train_eval.accuracy > config.threshold;
        let better = best
            .as_ref()
            .is_none_or(|b| train_eval.accuracy > b.report.growth.last().map_or(-1.0, |g| g.train_accuracy));
        if accepted || better {
            report.growth = vec![history.last().expect("pushed").clone()];
            best = Some(GrowOutcome {
                model: model.clone(),
                spec,
                report,
                accepted,
            });
        }
        if accepted {
            break;
        }
        previous = Some((model, hidden_len));
    }
    let mut out = best.expect("cap >= 1");
    out.report.growth = history;
    Ok(out)
}
