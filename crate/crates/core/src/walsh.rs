//! Walsh target codes.
//!
//! A Sylvester-ordered Hadamard matrix with `+1 -> 1` and `-1 -> 0` gives
//! binary rows that are pairwise at Hamming distance `rank / 2`. Row 0 is the
//! all-ones vector and is never handed to a class.

use crate::error::{Error, Result};

pub const DEFAULT_RANK: usize = 16;

fn check_rank(rank: usize) -> Result<()> {
    if rank < 2 || !rank.is_power_of_two() {
        return Err(Error::InvalidRank(rank));
    }
    Ok(())
}

/// Sylvester construction: `H(2n) = [[H(n), H(n)], [H(n), -H(n)]]`.
pub fn build_hadamard(rank: usize) -> Result<Vec<Vec<i8>>> {
    check_rank(rank)?;
    let mut h: Vec<Vec<i8>> = vec![vec![1, 1], vec![1, -1]];
    while h.len() < rank {
        let n = h.len();
        let mut next = Vec::with_capacity(2 * n);
        for row in &h {
            let mut r = row.clone();
            r.extend_from_slice(row);
            next.push(r);
        }
        for row in &h {
            let mut r = row.clone();
            r.extend(row.iter().map(|v| -v));
            next.push(r);
        }
        h = next;
    }
    Ok(h)
}

/// Binary (0/1) Walsh matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalshMatrix {
    rows: Vec<Vec<u8>>,
}

impl WalshMatrix {
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> &[u8] {
        &self.rows[index]
    }
}

pub fn build_modified_walsh(rank: usize) -> Result<WalshMatrix> {
    let rows = build_hadamard(rank)?
        .into_iter()
        .map(|r| r.into_iter().map(|v| u8::from(v > 0)).collect())
        .collect();
    Ok(WalshMatrix { rows })
}

pub fn hamming_distance(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "hamming distance of rows with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// The modified Walsh matrix together with the class -> row assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshCodebook {
    matrix: WalshMatrix,
    class_rows: Vec<usize>,
    targets: Vec<Vec<f64>>,
}

/// Class `k` gets row `k + 1`; the all-ones row 0 is skipped.
pub fn assign_class_targets(matrix: WalshMatrix, class_count: usize) -> Result<WalshCodebook> {
    let rank = matrix.rank();
    if class_count + 1 > rank {
        return Err(Error::Capacity {
            rank,
            max: rank - 1,
            requested: class_count,
        });
    }
    WalshCodebook::from_parts(matrix, (1..=class_count).collect())
}

impl WalshCodebook {
    pub fn new(rank: usize, class_count: usize) -> Result<Self> {
        assign_class_targets(build_modified_walsh(rank)?, class_count)
    }

    /// Rebuild a codebook with an explicit row assignment (e.g. from a checkpoint).
    pub fn with_rows(rank: usize, class_rows: Vec<usize>) -> Result<Self> {
        Self::from_parts(build_modified_walsh(rank)?, class_rows)
    }

    fn from_parts(matrix: WalshMatrix, class_rows: Vec<usize>) -> Result<Self> {
        let rank = matrix.rank();
        if class_rows.len() + 1 > rank {
            return Err(Error::Capacity {
                rank,
                max: rank - 1,
                requested: class_rows.len(),
            });
        }
        for (i, &r) in class_rows.iter().enumerate() {
            if r == 0 || r >= rank {
                return Err(Error::contract(format!(
                    "class row {r} is not a usable row of a rank-{rank} codebook"
                )));
            }
            if class_rows[..i].contains(&r) {
                return Err(Error::contract(format!("class row {r} assigned twice")));
            }
        }
        let targets = class_rows
            .iter()
            .map(|&r| matrix.row(r).iter().map(|&v| f64::from(v)).collect())
            .collect();
        Ok(WalshCodebook {
            matrix,
            class_rows,
            targets,
        })
    }

    pub fn rank(&self) -> usize {
        self.matrix.rank()
    }

    pub fn class_count(&self) -> usize {
        self.class_rows.len()
    }

    pub fn class_rows(&self) -> &[usize] {
        &self.class_rows
    }

    pub fn matrix(&self) -> &WalshMatrix {
        &self.matrix
    }

    /// Target vector for `class` as floats.
    pub fn target(&self, class: usize) -> &[f64] {
        &self.targets[class]
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }
}
