//! Labeled datasets, loaders and deterministic splits.

mod csv;
mod idx;
mod split;
pub mod synthetic;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub use self::csv::{load_iris, load_signals_csv, parse_iris, parse_signals_csv, write_signals_csv, CsvOptions};
pub use idx::{load_mnist_dir, load_mnist_idx, parse_idx_images, parse_idx_labels, MnistFiles};
pub use split::{split, split_predefined, stratified_subset, Split, SplitSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Tensor>,
    labels: Vec<usize>,
    class_count: usize,
    class_names: Option<Vec<String>>,
    provenance: String,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Tensor>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::contract(format!("label {l} outside {class_count} classes")));
        }
        if let Some(first) = samples.first() {
            if let Some(bad) = samples.iter().find(|s| s.shape() != first.shape()) {
                return Err(Error::shape(format!(
                    "mixed sample shapes {:?} and {:?}",
                    first.shape(),
                    bad.shape()
                )));
            }
        }
        Ok(LabeledDataset {
            samples,
            labels,
            class_count,
            class_names: None,
            provenance: String::new(),
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn sample_shape(&self) -> Option<&[usize]> {
        self.samples.first().map(Tensor::shape)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// New dataset made of the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tensor, usize)> {
        self.samples.iter().zip(self.labels.iter().copied())
    }

    pub fn map_samples(&self, f: impl Fn(&Tensor) -> Tensor) -> LabeledDataset {
        LabeledDataset {
            samples: self.samples.iter().map(f).collect(),
            ..self.clone()
        }
    }
}

/// Per-position standardization (zero mean, unit variance), fitted on one
/// dataset and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        let first = data
            .samples()
            .first()
            .ok_or_else(|| Error::InsufficientData("cannot standardize an empty dataset".into()))?;
        let d = first.len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for s in data.samples() {
            mean.iter_mut().zip(s.data()).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for s in data.samples() {
            var.iter_mut()
                .zip(s.data().iter().zip(&mean))
                .for_each(|(acc, (v, m))| *acc += (v - m) * (v - m) / n);
        }
        // Constant features pass through centered but unscaled.
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply_tensor(&self, t: &Tensor) -> Tensor {
        let data = t
            .data()
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        Tensor::new(t.shape().to_vec(), data).expect("same shape")
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.sample_shape().is_some_and(|s| s.iter().product::<usize>() != self.mean.len()) {
            return Err(Error::shape(format!(
                "standardizer fitted on {} features",
                self.mean.len()
            )));
        }
        Ok(data.map_samples(|t| self.apply_tensor(t)))
    }
}
