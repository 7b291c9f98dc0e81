//! Offline 1D-signal augmentation: gain, polarity, circular shift, noise.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::seed::{self, Rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub gain_low: f64,
    pub gain_high: f64,
    pub snr_db: f64,
    /// Largest shift as a fraction of the signal length.
    pub rotation_fraction: f64,
    pub factor: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            gain_low: 0.7,
            gain_high: 1.3,
            snr_db: 20.0,
            rotation_fraction: 1.0,
            factor: 3,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_low > 0.0 && self.gain_low <= self.gain_high && self.gain_high.is_finite()) {
            return Err(Error::contract(format!(
                "gain range [{}, {}] must satisfy 0 < low <= high",
                self.gain_low, self.gain_high
            )));
        }
        if self.factor < 1 {
            return Err(Error::contract("expansion factor must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.rotation_fraction) {
            return Err(Error::contract(format!(
                "rotation fraction {} outside [0, 1]",
                self.rotation_fraction
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::contract("snr must be finite"));
        }
        Ok(())
    }
}

pub fn amplify(signal: &[f64], gain: f64) -> Result<Vec<f64>> {
    if !(gain > 0.0) {
        return Err(Error::contract(format!("gain {gain} must be positive")));
    }
    Ok(signal.iter().map(|v| v * gain).collect())
}

pub fn invert_polarity(signal: &[f64]) -> Vec<f64> {
    signal.iter().map(|v| -v).collect()
}

/// Circular shift to the right; negative shifts move left.
pub fn rotate_time(signal: &[f64], shift: i64) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let s = shift.rem_euclid(n as i64) as usize;
    let mut out = signal.to_vec();
    out.rotate_right(s);
    out
}

pub fn power(signal: &[f64]) -> f64 {
    if signal.is_empty() {
        return 0.0;
    }
    signal.iter().map(|v| v * v).sum::<f64>() / signal.len() as f64
}

pub fn add_noise(signal: &[f64], snr_db: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let p = power(signal);
    if !(p > 0.0) {
        return Err(Error::contract("cannot set an SNR on a zero-power signal"));
    }
    let std = (p / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::contract(e.to_string()))?;
    Ok(signal.iter().map(|v| v + normal.sample(rng)).collect())
}

/// One random composition; each operation fires with probability 1/2.
pub fn augment_signal(signal: &[f64], config: &AugmentConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    let mut out = signal.to_vec();
    if rng.random_bool(0.5) {
        out = amplify(&out, rng.random_range(config.gain_low..=config.gain_high))?;
    }
    if rng.random_bool(0.5) {
        out = invert_polarity(&out);
    }
    if rng.random_bool(0.5) {
        let max = (config.rotation_fraction * out.len() as f64).floor() as i64;
        out = rotate_time(&out, rng.random_range(0..=max));
    }
    if rng.random_bool(0.5) && power(&out) > 0.0 {
        out = add_noise(&out, config.snr_db, rng)?;
    }
    Ok(out)
}

/// Originals first, then `factor - 1` variants of each sample.
pub fn expand_training_set(data: &LabeledDataset, config: &AugmentConfig) -> Result<LabeledDataset> {
    config.validate()?;
    if data.sample_shape().is_some_and(|s| s.len() != 1) {
        return Err(Error::Unsupported("augmentation is defined for 1D signals only".into()));
    }
    let mut samples = data.samples().to_vec();
    let mut labels = data.labels().to_vec();
    for round in 1..config.factor {
        for (i, (s, l)) in data.iter().enumerate() {
            let stream = (round * data.len() + i) as u64;
            let mut rng = seed::rng_indexed(config.seed, Stream::Augment, stream);
            samples.push(Tensor::vector(augment_signal(s.data(), config, &mut rng)?));
            labels.push(l);
        }
    }
    let out = LabeledDataset::new(samples, labels, data.class_count())?
        .with_provenance(format!("{}+augment x{}", data.provenance(), config.factor));
    Ok(match data.class_names() {
        Some(n) => out.with_class_names(n.to_vec()),
        None => out,
    })
}
