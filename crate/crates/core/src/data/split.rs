//! Seeded, class-stratified partitioning.

use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Share of the train pool held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train fraction", self.train_fraction),
            ("validation fraction", self.validation_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::contract(format!("{name} {f} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

impl Split {
    /// Train and validation together.
    pub fn train_pool(&self) -> LabeledDataset {
        let mut samples = self.train.samples().to_vec();
        samples.extend_from_slice(self.validation.samples());
        let mut labels = self.train.labels().to_vec();
        labels.extend_from_slice(self.validation.labels());
        let pool = LabeledDataset::new(samples, labels, self.train.class_count())
            .expect("halves of one dataset")
            .with_provenance(self.train.provenance().to_string());
        match self.train.class_names() {
            Some(n) => pool.with_class_names(n.to_vec()),
            None => pool,
        }
    }
}

fn shuffled_by_class(labels: &[usize], classes: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (k, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut seed::rng_indexed(seed, Stream::Split, k as u64));
    }
    by_class
}

/// Cuts each class list at round(n_k * fraction), requiring both sides to
/// keep a sample whenever `need_both` holds.
fn cut(
    by_class: &[Vec<usize>],
    fraction: f64,
    need_both: bool,
    what: &str,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut head, mut tail) = (Vec::new(), Vec::new());
    for (k, members) in by_class.iter().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        let h = (n as f64 * fraction).round() as usize;
        if need_both && (h == 0 || h == n) {
            return Err(Error::contract(format!(
                "class {k} has {n} samples, too few to stratify the {what} split at {fraction}"
            )));
        }
        head.extend_from_slice(&members[..h]);
        tail.extend_from_slice(&members[h..]);
    }
    head.sort_unstable();
    tail.sort_unstable();
    Ok((head, tail))
}

fn carve(data: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let by_class = shuffled_by_class(data.labels(), data.class_count(), seed::derive(spec.seed, Stream::Subset));
    let (val, train) = cut(&by_class, spec.validation_fraction, false, "validation")?;
    if train.is_empty() {
        return Err(Error::InsufficientData("validation split leaves no training samples".into()));
    }
    Ok((data.select(&train), data.select(&val)))
}

/// Train pool / test by train fraction, then validation from the pool.
pub fn split(data: &LabeledDataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let by_class = shuffled_by_class(data.labels(), data.class_count(), spec.seed);
    let (pool, test) = cut(&by_class, spec.train_fraction, true, "train/test")?;
    let (train, validation) = carve(&data.select(&pool), spec)?;
    Ok(Split {
        train,
        validation,
        test: data.select(&test),
    })
}

/// Keeps a predefined test partition and only carves validation from `train`.
pub fn split_predefined(
    train: &LabeledDataset,
    test: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<Split> {
    spec.validate()?;
    if train.class_count() != test.class_count() || train.sample_shape() != test.sample_shape() {
        return Err(Error::shape("predefined partitions disagree on classes or sample shape"));
    }
    let (train, validation) = carve(train, spec)?;
    Ok(Split {
        train,
        validation,
        test: test.clone(),
    })
}

/// Exactly `size` samples with per-class counts proportional to the source
/// (largest remainder, ties to the lower class).
pub fn stratified_subset(data: &LabeledDataset, size: usize, seed_value: u64) -> Result<LabeledDataset> {
    if size > data.len() {
        return Err(Error::InsufficientData(format!(
            "subset of {size} requested from {} samples",
            data.len()
        )));
    }
    let hist = data.class_histogram();
    let total = data.len() as f64;
    let exact: Vec<f64> = hist.iter().map(|&h| h as f64 * size as f64 / total).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..hist.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    let mut left = size - take.iter().sum::<usize>();
    for k in order {
        if left == 0 {
            break;
        }
        if take[k] < hist[k] {
            take[k] += 1;
            left -= 1;
        }
    }
    let by_class = shuffled_by_class(data.labels(), data.class_count(), seed::derive(seed_value, Stream::Subset));
    let mut idx: Vec<usize> = by_class
        .iter()
        .zip(&take)
        .flat_map(|(m, &t)| m[..t].iter().copied())
        .collect();
    idx.sort_unstable();
    Ok(data.select(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use proptest::prelude::*;

    fn indexed(labels: Vec<usize>, classes: usize) -> LabeledDataset {
        let samples = (0..labels.len()).map(|i| Tensor::vector(vec![i as f64])).collect();
        LabeledDataset::new(samples, labels, classes).unwrap()
    }

    fn ids(d: &LabeledDataset) -> Vec<usize> {
        d.samples().iter().map(|s| s.data()[0] as usize).collect()
    }

    fn iris_like() -> LabeledDataset {
        indexed((0..150).map(|i| i / 50).collect(), 3)
    }

    #[test]
    fn iris_shaped_split_counts() {
        let s = split(&iris_like(), &SplitSpec::default()).unwrap();
        assert_eq!(s.train.len() + s.validation.len(), 120);
        assert_eq!(s.test.len(), 30);
        assert_eq!(s.test.class_histogram(), vec![10, 10, 10]);
        assert_eq!(s.validation.class_histogram(), vec![4, 4, 4]);
        assert_eq!(s.train_pool().len(), 120);
    }

    #[test]
    fn fraction_bounds() {
        let d = iris_like();
        for f in [0.0, 1.0, -0.5, f64::NAN] {
            let spec = SplitSpec { train_fraction: f, ..SplitSpec::default() };
            assert_eq!(split(&d, &spec).unwrap_err().category(), "contract-error");
        }
    }

    #[test]
    fn tiny_class_rejected() {
        let d = indexed(vec![0, 0, 0, 0, 0, 1], 2);
        assert_eq!(split(&d, &SplitSpec::default()).unwrap_err().category(), "contract-error");
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let d = iris_like();
        let a = split(&d, &SplitSpec { seed: 5, ..SplitSpec::default() }).unwrap();
        let b = split(&d, &SplitSpec { seed: 5, ..SplitSpec::default() }).unwrap();
        let c = split(&d, &SplitSpec { seed: 6, ..SplitSpec::default() }).unwrap();
        assert_eq!(ids(&a.test), ids(&b.test));
        assert_eq!(ids(&a.validation), ids(&b.validation));
        assert_ne!(ids(&a.test), ids(&c.test));
    }

    #[test]
    fn subset_exact_size_and_proportions() {
        let labels: Vec<usize> = (0..1000).map(|i| if i < 700 { 0 } else if i < 950 { 1 } else { 2 }).collect();
        let d = indexed(labels, 3);
        let s = stratified_subset(&d, 101, 1).unwrap();
        assert_eq!(s.len(), 101);
        assert_eq!(s.class_histogram(), vec![71, 25, 5]);
        assert!(stratified_subset(&d, 1001, 1).is_err());
    }

    #[test]
    fn predefined_keeps_test() {
        let train = iris_like();
        let test = indexed(vec![0, 1, 2], 3);
        let s = split_predefined(&train, &test, &SplitSpec::default()).unwrap();
        assert_eq!(ids(&s.test), vec![0, 1, 2]);
        assert_eq!(s.train.len() + s.validation.len(), 150);
    }

    proptest! {
        #[test]
        fn split_partitions_and_stratifies(
            counts in proptest::collection::vec(2usize..40, 2..5),
            train in 0.3f64..0.9,
            val in 0.05f64..0.5,
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat(k).take(c)).collect();
            let d = indexed(labels, counts.len());
            let spec = SplitSpec { train_fraction: train, validation_fraction: val, seed };
            let Ok(s) = split(&d, &spec) else { return Ok(()); };
            let mut all: Vec<usize> = ids(&s.train);
            all.extend(ids(&s.validation));
            all.extend(ids(&s.test));
            all.sort_unstable();
            prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
            let pool = s.train_pool().class_histogram();
            for (k, &c) in counts.iter().enumerate() {
                prop_assert!((pool[k] as f64 - c as f64 * train).abs() <= 1.0);
                let v = s.validation.class_histogram()[k] as f64;
                prop_assert!((v - pool[k] as f64 * val).abs() <= 1.0);
            }
        }
    }
}
