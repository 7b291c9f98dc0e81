//! Training loop, evaluation, repeated trials and layer growing.

mod config;
mod fit;
mod grow;
mod optim;
mod trials;

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub use config::{OptimizerKind, TrainConfig};
pub use fit::{evaluate, feature_outputs, fit, fit_observed, Evaluation};
pub use grow::{grow_layers, max_depth, spec_at_depth, GrowOutcome};
pub use trials::{median, run_trials, train_once, train_once_observed, trial_seed, TrainedRun, Trial, TrialData, TrialSummary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's training batches.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthStep {
    pub depth: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub weight_count: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub epochs_run: usize,
    /// Epoch whose weights were kept (1-based; 0 if no epoch ran).
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub test_accuracy: Option<f64>,
    /// Walsh-centred divergence of the test-set features.
    pub test_divergence: Option<f64>,
    pub weight_count: usize,
    pub wall_clock_secs: f64,
    pub growth: Vec<GrowthStep>,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_loss,val_acc";

impl TrainReport {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for m in &self.epochs {
            writeln!(s, "{},{:?},{:?},{:?}", m.epoch, m.train_loss, m.val_loss, m.val_accuracy)
                .expect("write to string");
        }
        s
    }

    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.metrics_csv()).map_err(|e| Error::io(path, e))
    }
}
