//! Class-separability analysis of feature-extractor outputs.
//!
//! `S` is the sum of per-class covariances (each normalized by its class
//! count), `B` the covariance of the class centers (normalized by the number
//! of centers), and the divergence is `tr((S + ridge I)^-1 B)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::walsh::WalshCodebook;

pub type Matrix = DMatrix<f64>;

/// Where the class centers for `B` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterSource {
    /// The assigned Walsh target rows.
    Walsh,
    /// Empirical class means of the outputs (diagnostic).
    Empirical,
}

impl std::str::FromStr for CenterSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "walsh" => Ok(CenterSource::Walsh),
            "empirical" => Ok(CenterSource::Empirical),
            other => Err(Error::contract(format!("unknown divergence mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScatterReport {
    pub within: DMatrix<f64>,
    pub between: DMatrix<f64>,
    pub divergence: f64,
    pub class_counts: Vec<usize>,
    pub ridge: f64,
    pub source: CenterSource,
}

const RIDGE_SCALE: f64 = 1e-6;
const RIDGE_FLOOR: f64 = 1e-12;

fn check_outputs(outputs: &[Vec<f64>], labels: &[usize], class_count: usize) -> Result<usize> {
    if outputs.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} outputs with {} labels",
            outputs.len(),
            labels.len()
        )));
    }
    let dim = outputs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InsufficientData("no outputs".into()))?;
    if outputs.iter().any(|o| o.len() != dim) {
        return Err(Error::shape("outputs of differing lengths"));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::contract(format!("label {l} outside {class_count} classes")));
    }
    Ok(dim)
}

pub fn class_counts(labels: &[usize], class_count: usize) -> Vec<usize> {
    let mut counts = vec![0; class_count];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Empirical mean of each class that has samples, in class order.
pub fn class_means(outputs: &[Vec<f64>], labels: &[usize], class_count: usize) -> Result<Vec<Vec<f64>>> {
    let dim = check_outputs(outputs, labels, class_count)?;
    let counts = class_counts(labels, class_count);
    let mut sums = vec![vec![0.0; dim]; class_count];
    for (o, &l) in outputs.iter().zip(labels) {
        sums[l].iter_mut().zip(o).for_each(|(s, v)| *s += v);
    }
    Ok(sums
        .into_iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect())
}

/// `S = sum_k S_k` over classes present in `labels`; `S_k` is the class
/// covariance normalized by the class count. Every present class needs at
/// least two samples.
pub fn within_class_scatter(outputs: &[Vec<f64>], labels: &[usize], class_count: usize) -> Result<DMatrix<f64>> {
    let dim = check_outputs(outputs, labels, class_count)?;
    let counts = class_counts(labels, class_count);
    if let Some((k, &n)) = counts.iter().enumerate().find(|(_, &n)| n == 1) {
        return Err(Error::InsufficientData(format!(
            "class {k} has {n} sample; scatter needs at least 2"
        )));
    }
    let mut means = vec![vec![0.0; dim]; class_count];
    for (o, &l) in outputs.iter().zip(labels) {
        means[l].iter_mut().zip(o).for_each(|(m, v)| *m += v);
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        if n > 0 {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    let mut s = DMatrix::zeros(dim, dim);
    for (o, &l) in outputs.iter().zip(labels) {
        let d: Vec<f64> = o.iter().zip(&means[l]).map(|(a, b)| a - b).collect();
        let w = 1.0 / counts[l] as f64;
        for i in 0..dim {
            for j in i..dim {
                s[(i, j)] += w * d[i] * d[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            s[(i, j)] = s[(j, i)];
        }
    }
    Ok(s)
}

/// `B = (1/C) sum_k (mu_k - mu)(mu_k - mu)^T` over the given centers.
pub fn between_class_scatter(centers: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if centers.len() < 2 {
        return Err(Error::contract(format!(
            "between-class scatter needs at least 2 classes, got {}",
            centers.len()
        )));
    }
    let dim = centers[0].len();
    if centers.iter().any(|c| c.len() != dim) {
        return Err(Error::shape("class centers of differing lengths"));
    }
    let c = centers.len() as f64;
    let mut grand = vec![0.0; dim];
    for m in centers {
        grand.iter_mut().zip(m).for_each(|(g, v)| *g += v / c);
    }
    let mut b = DMatrix::zeros(dim, dim);
    for m in centers {
        let d: Vec<f64> = m.iter().zip(&grand).map(|(a, g)| a - g).collect();
        for i in 0..dim {
            for j in 0..dim {
                b[(i, j)] += d[i] * d[j] / c;
            }
        }
    }
    Ok(b)
}

pub fn walsh_centers(codebook: &WalshCodebook) -> Vec<Vec<f64>> {
    codebook.targets().to_vec()
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    m.nrows() == m.ncols() && (m - m.transpose()).amax() <= 1e-12 * scale
}

/// `tr((S + ridge I)^-1 B)` via a Cholesky solve.
pub fn divergence_value(within: &DMatrix<f64>, between: &DMatrix<f64>, ridge: f64) -> Result<f64> {
    if !is_symmetric(within) || !is_symmetric(between) {
        return Err(Error::contract("scatter matrices must be square and symmetric"));
    }
    if within.shape() != between.shape() {
        return Err(Error::shape(format!(
            "S is {:?}, B is {:?}",
            within.shape(),
            between.shape()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::contract(format!("ridge {ridge} must be non-negative")));
    }
    let n = within.nrows();
    let regularized = within + DMatrix::identity(n, n) * ridge;
    let chol = regularized
        .cholesky()
        .ok_or_else(|| Error::contract("within-class scatter is not positive definite; raise the ridge"))?;
    Ok(chol.solve(between).trace())
}

/// Default ridge: `1e-6 * tr(S) / M`, floored at `1e-12` so an exactly
/// zero within-class scatter stays invertible.
pub fn default_ridge(within: &DMatrix<f64>) -> f64 {
    (RIDGE_SCALE * within.trace() / within.nrows() as f64).max(RIDGE_FLOOR)
}

/// Full analysis of a set of outputs. `class_count` must match the codebook.
pub fn analyze(
    outputs: &[Vec<f64>],
    labels: &[usize],
    codebook: &WalshCodebook,
    source: CenterSource,
    ridge: Option<f64>,
) -> Result<ScatterReport> {
    let class_count = codebook.class_count();
    let within = within_class_scatter(outputs, labels, class_count)?;
    if within.nrows() != codebook.rank() {
        return Err(Error::shape(format!(
            "outputs of length {} for a rank-{} codebook",
            within.nrows(),
            codebook.rank()
        )));
    }
    let counts = class_counts(labels, class_count);
    if counts.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(Error::InsufficientData(
            "divergence needs samples from at least 2 classes".into(),
        ));
    }
    let centers = match source {
        CenterSource::Walsh => walsh_centers(codebook),
        CenterSource::Empirical => class_means(outputs, labels, class_count)?,
    };
    let between = between_class_scatter(&centers)?;
    let ridge = ridge.unwrap_or_else(|| default_ridge(&within));
    let divergence = divergence_value(&within, &between, ridge)?;
    Ok(ScatterReport {
        within,
        between,
        divergence,
        class_counts: counts,
        ridge,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    /// Explicit Gauss-Jordan inverse, for checking the Cholesky route.
    fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut a = m.clone();
        let mut inv = DMatrix::<f64>::identity(n, n);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
                .unwrap();
            a.swap_rows(col, pivot);
            inv.swap_rows(col, pivot);
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = a[(r, col)];
                    for j in 0..n {
                        a[(r, j)] -= f * a[(col, j)];
                        inv[(r, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn identical_outputs_have_zero_scatter() {
        let outputs = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0, 5.0], vec![0.0, 5.0]];
        let s = within_class_scatter(&outputs, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(s, DMatrix::zeros(2, 2));
    }

    #[test]
    fn one_dimensional_toy() {
        let outputs = vec![vec![-1.0], vec![1.0], vec![1.0], vec![3.0]];
        let s = within_class_scatter(&outputs, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(s, m1(2.0));
        let b = between_class_scatter(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(b, m1(1.0));
        assert_eq!(divergence_value(&m1(1.0), &m1(1.0), 0.0).unwrap(), 1.0);
    }

    #[test]
    fn single_sample_class_is_insufficient() {
        let outputs = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            within_class_scatter(&outputs, &[0, 0, 1], 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn within_scatter_matches_two_pass_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (n, d, c) = (40, 5, 3);
        let outputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let s = within_class_scatter(&outputs, &labels, c).unwrap();
        let mut oracle = DMatrix::<f64>::zeros(d, d);
        for k in 0..c {
            let members: Vec<&Vec<f64>> = outputs.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(o, _)| o).collect();
            let nk = members.len() as f64;
            let mean: Vec<f64> = (0..d).map(|j| members.iter().map(|o| o[j]).sum::<f64>() / nk).collect();
            for i in 0..d {
                for j in 0..d {
                    let cov: f64 = members.iter().map(|o| (o[i] - mean[i]) * (o[j] - mean[j])).sum::<f64>() / nk;
                    oracle[(i, j)] += cov;
                }
            }
        }
        assert!((s - oracle).amax() < 1e-14);
    }

    #[test]
    fn walsh_between_scatter_matches_outer_products() {
        let cb = WalshCodebook::new(16, 2).unwrap();
        let b = between_class_scatter(&walsh_centers(&cb)).unwrap();
        let (h1, h2) = (cb.target(0), cb.target(1));
        for i in 0..16 {
            for j in 0..16 {
                let mi = (h1[i] + h2[i]) / 2.0;
                let mj = (h1[j] + h2[j]) / 2.0;
                let e = ((h1[i] - mi) * (h1[j] - mj) + (h2[i] - mi) * (h2[j] - mj)) / 2.0;
                assert_eq!(b[(i, j)], e);
            }
        }
        assert!(between_class_scatter(&[vec![1.0]]).is_err());
    }

    #[test]
    fn identity_within_gives_trace_and_zero_between_gives_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * a.transpose();
        let v = divergence_value(&DMatrix::identity(6, 6), &b, 0.0).unwrap();
        assert!((v - b.trace()).abs() < 1e-10);
        assert_eq!(divergence_value(&DMatrix::identity(6, 6), &DMatrix::zeros(6, 6), 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn cholesky_route_matches_explicit_inverse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let s = &a * a.transpose() + DMatrix::identity(8, 8) * 0.1;
        let c = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = &c * c.transpose();
        let v = divergence_value(&s, &b, 1e-4).unwrap();
        let oracle = (inverse(&(&s + DMatrix::identity(8, 8) * 1e-4)) * &b).trace();
        assert!((v - oracle).abs() / oracle.abs() < 1e-8);
    }

    #[test]
    fn non_symmetric_rejected() {
        let mut s = DMatrix::identity(2, 2);
        s[(0, 1)] = 0.5;
        assert!(matches!(
            divergence_value(&s, &DMatrix::identity(2, 2), 0.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn relabeling_classes_leaves_divergence_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let cb = WalshCodebook::new(8, 3).unwrap();
        let outputs: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..8).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let relabeled: Vec<usize> = labels.iter().map(|&l| (l + 1) % 3).collect();
        for src in [CenterSource::Walsh, CenterSource::Empirical] {
            let a = analyze(&outputs, &labels, &cb, src, Some(1e-6)).unwrap();
            let b = analyze(&outputs, &relabeled, &cb, src, Some(1e-6)).unwrap();
            assert!((a.divergence - b.divergence).abs() <= 1e-9 * a.divergence.abs());
        }
    }
}
