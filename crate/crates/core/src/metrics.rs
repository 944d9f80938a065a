//! Normalized mutual information between two labelings.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Cluster-by-class co-occurrence counts. Label values are mapped to dense
/// row/column indices by first appearance; `-1` is an ordinary label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub total: usize,
}

fn dense_ids(labels: &[i64]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let ids = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

pub fn contingency(pred: &[i64], truth: &[i64]) -> Result<ContingencyTable> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("cannot compare empty labelings"));
    }
    let (rows, nr) = dense_ids(pred);
    let (cols, nc) = dense_ids(truth);
    let mut counts = vec![vec![0; nc]; nr];
    for (&r, &c) in rows.iter().zip(&cols) {
        counts[r][c] += 1;
    }
    let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums = (0..nc).map(|c| counts.iter().map(|r| r[c]).sum()).collect();
    Ok(ContingencyTable {
        counts,
        row_sums,
        col_sums,
        total: pred.len(),
    })
}

/// NMI with geometric-mean normalization and natural logarithms:
///
/// ```text
/// Σ_ij n_ij log(n n_ij / (n_i n_j)) / sqrt((Σ_i n_i log(n_i/n)) (Σ_j n_j log(n_j/n)))
/// ```
///
/// When either side is a single cluster the ratio is 0/0; the result is 1
/// if both sides are single clusters and 0 otherwise.
pub fn nmi(pred: &[i64], truth: &[i64]) -> Result<f64> {
    let t = contingency(pred, truth)?;
    if t.row_sums.len() == 1 || t.col_sums.len() == 1 {
        return Ok(if t.row_sums.len() == 1 && t.col_sums.len() == 1 { 1.0 } else { 0.0 });
    }
    // Identical partitions up to relabeling: exactly 1 without round-off.
    if t.row_sums.len() == t.col_sums.len() && t.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1) {
        return Ok(1.0);
    }
    let n = t.total as f64;
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij * (n * nij / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    let entropy_term = |sums: &[usize]| sums.iter().map(|&s| s as f64 * (s as f64 / n).ln()).sum::<f64>();
    let denom = (entropy_term(&t.row_sums) * entropy_term(&t.col_sums)).sqrt();
    Ok((mi / denom).clamp(0.0, 1.0))
}
