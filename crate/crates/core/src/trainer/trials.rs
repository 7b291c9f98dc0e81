use rayon::prelude::*;

use super::config::TrainConfig;
use super::fit::{evaluate, feature_outputs, fit_observed, Evaluation};
use super::{EpochMetrics, TrainReport};
use crate::arch::ModelSpec;
use crate::data::{split, split_predefined, stratified_subset, LabeledDataset, Split, SplitSpec, Standardizer};
use crate::divergence::{analyze, CenterSource};
use crate::error::Result;
use crate::layers::FeatureExtractorModel;
use crate::seed::{self, Stream};
use crate::walsh::WalshCodebook;

/// Where train and test samples come from.
#[derive(Debug, Clone, Copy)]
pub enum TrialData<'a> {
    /// One pool, split per trial by the configured fractions.
    Pool(&'a LabeledDataset),
    /// A benchmark's own partition; only validation is carved from `train`.
    Predefined {
        train: &'a LabeledDataset,
        test: &'a LabeledDataset,
    },
}

impl TrialData<'_> {
    fn class_count(&self) -> usize {
        match self {
            TrialData::Pool(d) => d.class_count(),
            TrialData::Predefined { train, test } => train.class_count().max(test.class_count()),
        }
    }
}

/// One complete train-and-test run.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: FeatureExtractorModel,
    pub codebook: WalshCodebook,
    pub standardizer: Option<Standardizer>,
    pub split: Split,
    pub test: Evaluation,
    pub report: TrainReport,
}

/// Splits (optionally subsetting the training source first), standardizes on
/// the train pool if asked, builds a fresh model, fits, and scores the test set.
pub fn train_once(spec: &ModelSpec, data: TrialData, config: &TrainConfig, run_seed: u64) -> Result<TrainedRun> {
    train_once_observed(spec, data, config, run_seed, &mut |_| {})
}

pub fn train_once_observed(
    spec: &ModelSpec,
    data: TrialData,
    config: &TrainConfig,
    run_seed: u64,
    observe: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainedRun> {
    config.validate()?;
    let spec_seed = SplitSpec { seed: run_seed, ..config.split };
    let subset = |d: &LabeledDataset| match config.train_subset {
        Some(n) if n < d.len() => stratified_subset(d, n, run_seed),
        _ => Ok(d.clone()),
    };
    let mut parts = match data {
        TrialData::Pool(d) => split(&subset(d)?, &spec_seed)?,
        TrialData::Predefined { train, test } => split_predefined(&subset(train)?, test, &spec_seed)?,
    };
    let standardizer = if config.standardize.unwrap_or(false) {
        let st = Standardizer::fit(&parts.train_pool())?;
        parts = Split {
            train: st.apply(&parts.train)?,
            validation: st.apply(&parts.validation)?,
            test: st.apply(&parts.test)?,
        };
        Some(st)
    } else {
        None
    };
    let codebook = WalshCodebook::new(spec.walsh_rank, data.class_count())?;
    let mut model = spec.build(&mut seed::rng(run_seed, Stream::Init))?;
    let run_config = TrainConfig { seed: run_seed, ..config.clone() };
    let mut report = fit_observed(&mut model, &parts.train, &parts.validation, &codebook, &run_config, observe)?;
    let test = evaluate(&model, &parts.test, &codebook)?;
    report.test_accuracy = Some(test.accuracy);
    report.test_divergence = feature_outputs(&model, &parts.test)
        .and_then(|o| analyze(&o, parts.test.labels(), &codebook, CenterSource::Walsh, None))
        .ok()
        .map(|r| r.divergence);
    Ok(TrainedRun {
        model,
        codebook,
        standardizer,
        split: parts,
        test,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct TrialSummary {
    pub trials: Vec<Trial>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single trial).
    pub std: f64,
    pub median: f64,
}

impl TrialSummary {
    pub fn accuracies(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.accuracy).collect()
    }
}

pub fn trial_seed(master: u64, index: usize) -> u64 {
    seed::derive_indexed(master, Stream::Trial, index as u64)
}

/// `config.trials` independent runs, each with its own derived seed. Runs
/// execute in parallel; results are ordered by trial index.
pub fn run_trials(spec: &ModelSpec, data: TrialData, config: &TrainConfig) -> Result<TrialSummary> {
    config.validate()?;
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|index| {
            let s = trial_seed(config.seed, index);
            let run = train_once(spec, data, config, s)?;
            Ok(Trial {
                index,
                seed: s,
                accuracy: run.test.accuracy,
                correct: run.test.correct,
                total: run.test.total,
                report: run.report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let acc: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / n;
    let std = if acc.len() > 1 {
        (acc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(TrialSummary {
        median: median(&acc),
        trials,
        mean,
        std,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}
