//! Flat `key=value` run configuration.

use std::path::Path;

use crate::augment::AugmentConfig;
use crate::data::SplitSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Heavy-ball momentum: `v = momentum * v + g; p -= lr * v`.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// SGD momentum, or Adam's first-moment decay.
    pub momentum: f64,
    /// Adam's second-moment decay.
    pub beta2: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Epochs without a validation-loss improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub augment: Option<AugmentConfig>,
    /// Per-feature standardization fitted on the train pool; `None` leaves the
    /// choice to the caller's format default.
    pub standardize: Option<bool>,
    pub split: SplitSpec,
    pub train_subset: Option<usize>,
    pub trials: usize,
    pub threshold: f64,
    pub depth_cap: usize,
    pub keep_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Sgd,
            lr: 1e-3,
            momentum: 0.9,
            beta2: 0.999,
            batch: 32,
            epochs: 100,
            patience: 10,
            seed: 0,
            augment: None,
            standardize: None,
            split: SplitSpec::default(),
            train_subset: None,
            trials: 1,
            threshold: 0.95,
            depth_cap: 9,
            keep_weights: false,
        }
    }
}

fn value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::parse(line, format!("bad value '{v}' for '{key}'")))
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::parse(line, format!("'{key}' expects true or false, found '{v}'"))),
    }
}

impl TrainConfig {
    /// Parses `key=value` lines on top of the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or_default().trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("expected key=value, found '{content}'")))?;
            c.set(line, k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    fn augment_mut(&mut self) -> &mut AugmentConfig {
        let seed = self.seed;
        self.augment.get_or_insert_with(|| AugmentConfig { seed, ..AugmentConfig::default() })
    }

    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => {
                self.seed = value(line, key, v)?;
                self.split.seed = self.seed;
                if let Some(a) = &mut self.augment {
                    a.seed = self.seed;
                }
            }
            "optimizer" => {
                self.optimizer = match v {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::Adam,
                    _ => return Err(Error::parse(line, format!("unknown optimizer '{v}'"))),
                }
            }
            "lr" => self.lr = value(line, key, v)?,
            "momentum" | "beta1" => self.momentum = value(line, key, v)?,
            "beta2" => self.beta2 = value(line, key, v)?,
            "batch" => self.batch = value(line, key, v)?,
            "epochs" => self.epochs = value(line, key, v)?,
            "patience" => self.patience = value(line, key, v)?,
            "standardize" => self.standardize = Some(flag(line, key, v)?),
            "train_fraction" => self.split.train_fraction = value(line, key, v)?,
            "val_fraction" => self.split.validation_fraction = value(line, key, v)?,
            "train_subset" => self.train_subset = Some(value(line, key, v)?),
            "trials" => self.trials = value(line, key, v)?,
            "threshold" => self.threshold = value(line, key, v)?,
            "depth_cap" => self.depth_cap = value(line, key, v)?,
            "keep_weights" => self.keep_weights = flag(line, key, v)?,
            "augment" => {
                if flag(line, key, v)? {
                    self.augment_mut();
                } else {
                    self.augment = None;
                }
            }
            "augment_factor" => self.augment_mut().factor = value(line, key, v)?,
            "gain_low" => self.augment_mut().gain_low = value(line, key, v)?,
            "gain_high" => self.augment_mut().gain_high = value(line, key, v)?,
            "snr_db" => self.augment_mut().snr_db = value(line, key, v)?,
            "rotation_fraction" => self.augment_mut().rotation_fraction = value(line, key, v)?,
            _ => return Err(Error::parse(line, format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::contract("momentum terms must lie in [0, 1)"));
        }
        if self.batch == 0 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::contract("trials must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::contract(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.depth_cap == 0 {
            return Err(Error::contract("depth cap must be at least 1"));
        }
        if self.train_subset == Some(0) {
            return Err(Error::contract("train subset must be at least 1"));
        }
        self.split.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}
