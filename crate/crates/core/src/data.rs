//! Dense datasets: CSV loading, z-score standardization and synthetic
//! fixtures with ground-truth labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Row-major `n × d` matrix of finite features, optionally with one integer
/// class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    n: usize,
    d: usize,
    values: Vec<f64>,
    truth_labels: Option<Vec<i64>>,
}

impl DataSet {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if values.len() != n * d {
            return Err(Error::invalid(format!(
                "expected {} values for a {n}x{d} dataset, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        Ok(Self {
            n,
            d,
            values,
            truth_labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::invalid(format!("row {} has length {}, expected {d}", bad + 1, rows[bad].len())));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.truth_labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.truth_labels = None;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn truth_labels(&self) -> Option<&[i64]> {
        self.truth_labels.as_deref()
    }

    /// Returns a copy scaled by `factor`, labels kept.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new(self.n, self.d, self.values.iter().map(|v| v * factor).collect())?;
        out.truth_labels = self.truth_labels.clone();
        Ok(out)
    }

    /// Writes the dataset as headerless CSV. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv(&self, path: &Path, with_labels: bool) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let labels = if with_labels { self.truth_labels.as_deref() } else { None };
        for (i, row) in self.rows().enumerate() {
            let mut line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            if let Some(labels) = labels {
                line.push(',');
                line.push_str(&labels[i].to_string());
            }
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Loads a comma-separated dense matrix. With `has_label_column` the last
/// column is parsed as a base-10 integer class id; `skip_header` drops the
/// first line.
pub fn load_dense_matrix(path: &Path, has_label_column: bool, skip_header: bool) -> Result<DataSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let row = idx + 1;
        if skip_header && idx == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Parse {
                    row,
                    col: None,
                    msg: format!("ragged row: {} columns, expected {w}", cells.len()),
                })
            }
            _ => {}
        }
        let feature_cells = if has_label_column {
            let Some((label, features)) = cells.split_last() else { unreachable!() };
            let label = label.trim().parse::<i64>().map_err(|e| Error::Parse {
                row,
                col: Some(cells.len()),
                msg: format!("label {label:?}: {e}"),
            })?;
            labels.push(label);
            features
        } else {
            &cells[..]
        };
        for (c, cell) in feature_cells.iter().enumerate() {
            let v = cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                row,
                col: Some(c + 1),
                msg: format!("{cell:?}: {e}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    col: Some(c + 1),
                    msg: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        n += 1;
    }

    let width = width.ok_or_else(|| Error::Parse {
        row: 0,
        col: None,
        msg: "empty file".into(),
    })?;
    let d = if has_label_column { width - 1 } else { width };
    if d == 0 {
        return Err(Error::Parse {
            row: 1,
            col: None,
            msg: "no feature columns".into(),
        });
    }
    let data = DataSet::new(n, d, values)?;
    if has_label_column {
        data.with_labels(labels)
    } else {
        Ok(data)
    }
}

/// Per-feature z-score with population variance. Constant columns become
/// all zeros.
pub fn standardize(data: &DataSet) -> Result<DataSet> {
    let (n, d) = (data.n, data.d);
    if n < 2 {
        return Err(Error::invalid("standardize needs at least 2 samples"));
    }
    let mut out = data.values.clone();
    for c in 0..d {
        let mean = data.rows().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = data.rows().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        // Treat round-off-level spread as constant.
        let constant = std <= 1e-14 * mean.abs().max(1.0);
        for r in 0..n {
            let v = &mut out[r * d + c];
            *v = if constant { 0.0 } else { (*v - mean) / std };
        }
    }
    let mut result = DataSet::new(n, d, out)?;
    result.truth_labels = data.truth_labels.clone();
    Ok(result)
}

/// Isotropic Gaussian blobs, `n_per_cluster` points around each center,
/// labelled by center index.
pub fn generate_blobs(n_per_cluster: usize, centers: &[Vec<f64>], spread: f64, seed: u64) -> Result<DataSet> {
    if !(spread > 0.0) {
        return Err(Error::invalid(format!("spread must be positive, got {spread}")));
    }
    let d = centers.first().map(Vec::len).ok_or_else(|| Error::invalid("at least one center required"))?;
    if centers.iter().any(|c| c.len() != d) {
        return Err(Error::invalid("all centers must share a dimension"));
    }
    let normal = Normal::new(0.0, spread).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_per_cluster * centers.len() * d);
    let mut labels = Vec::with_capacity(n_per_cluster * centers.len());
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..n_per_cluster {
            values.extend(center.iter().map(|&c| c + normal.sample(&mut rng)));
            labels.push(label as i64);
        }
    }
    DataSet::new(labels.len(), d, values)?.with_labels(labels)
}

/// Noisy concentric circles in the plane, labelled by ring index.
pub fn generate_rings(n_per_ring: usize, radii: &[f64], noise: f64, seed: u64) -> Result<DataSet> {
    if radii.is_empty() {
        return Err(Error::invalid("at least one radius required"));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("radii must be positive and strictly increasing"));
    }
    if !(noise >= 0.0) {
        return Err(Error::invalid(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("positive std"));
    let mut values = Vec::with_capacity(n_per_ring * radii.len() * 2);
    let mut labels = Vec::with_capacity(n_per_ring * radii.len());
    for (label, &radius) in radii.iter().enumerate() {
        for _ in 0..n_per_ring {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let r = radius + normal.as_ref().map_or(0.0, |nd| nd.sample(&mut rng));
            values.push(r * theta.cos());
            values.push(r * theta.sin());
            labels.push(label as i64);
        }
    }
    DataSet::new(labels.len(), 2, values)?.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_plain_matrix() {
        let f = write_tmp("1,2\n3,4\n");
        let data = load_dense_matrix(f.path(), false, false).unwrap();
        assert_eq!((data.n(), data.d()), (2, 2));
        assert_eq!(data.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(data.truth_labels().is_none());
    }

    #[test]
    fn loads_label_column() {
        let f = write_tmp("1,2,0\n3,4,1\n");
        let data = load_dense_matrix(f.path(), true, false).unwrap();
        assert_eq!((data.n(), data.d()), (2, 2));
        assert_eq!(data.truth_labels(), Some(&[0, 1][..]));
    }

    #[test]
    fn header_row_is_skipped() {
        let f = write_tmp("a,b\n1,2\n");
        let data = load_dense_matrix(f.path(), false, true).unwrap();
        assert_eq!(data.n(), 1);
    }

    #[test]
    fn ragged_row_reports_row_number() {
        let f = write_tmp("1,2\n3\n");
        match load_dense_matrix(f.path(), false, false) {
            Err(Error::Parse { row: 2, .. }) => {}
            other => panic!("expected ragged-row error at row 2, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let f = write_tmp("1,2\n3,x\n");
        match load_dense_matrix(f.path(), false, false) {
            Err(Error::Parse { row: 2, col: Some(2), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        assert!(load_dense_matrix(f.path(), false, false).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(DataSet::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let data = generate_blobs(5, &[vec![0.1, -3.0, 7.25]], 0.7, 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        data.write_csv(f.path(), true).unwrap();
        let back = load_dense_matrix(f.path(), true, false).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn standardize_two_points() {
        let data = DataSet::new(2, 1, vec![0.0, 2.0]).unwrap();
        assert_eq!(standardize(&data).unwrap().values(), &[-1.0, 1.0]);
    }

    #[test]
    fn standardize_constant_column() {
        let data = DataSet::new(3, 1, vec![5.0, 5.0, 5.0]).unwrap();
        assert_eq!(standardize(&data).unwrap().values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn standardize_three_points_matches_direct_zscore() {
        // mean 1, population variance 2/3
        let c = 1.0 / (2.0f64 / 3.0).sqrt();
        let data = DataSet::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let out = standardize(&data).unwrap();
        let expected = [-c, 0.0, c];
        for (a, b) in out.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn standardize_needs_two_rows() {
        let data = DataSet::new(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(standardize(&data).is_err());
    }

    #[test]
    fn degenerate_blob_sits_on_center() {
        let data = generate_blobs(3, &[vec![2.0, -1.0]], 1e-12, 0).unwrap();
        for row in data.rows() {
            assert!(sq_dist(row, &[2.0, -1.0]).sqrt() < 1e-6);
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        let centers = [vec![0.0, 0.0], vec![5.0, 5.0]];
        assert_eq!(
            generate_blobs(20, &centers, 1.0, 9).unwrap(),
            generate_blobs(20, &centers, 1.0, 9).unwrap()
        );
    }

    #[test]
    fn separated_blobs_match_nearest_center() {
        let centers = [vec![0.0, 0.0], vec![20.0, 0.0]];
        let data = generate_blobs(200, &centers, 1.0, 1).unwrap();
        let truth = data.truth_labels().unwrap();
        for (row, &label) in data.rows().zip(truth) {
            let nearest = if sq_dist(row, &centers[0]) < sq_dist(row, &centers[1]) { 0 } else { 1 };
            assert_eq!(nearest, label);
        }
    }

    #[test]
    fn blobs_reject_bad_spread() {
        assert!(generate_blobs(3, &[vec![0.0]], 0.0, 0).is_err());
        assert!(generate_blobs(3, &[vec![0.0]], -1.0, 0).is_err());
        assert!(generate_blobs(3, &[], 1.0, 0).is_err());
    }

    #[test]
    fn noiseless_rings_have_exact_radii() {
        let data = generate_rings(4, &[1.0], 0.0, 5).unwrap();
        assert_eq!(data.n(), 4);
        for row in data.rows() {
            assert!((row[0].hypot(row[1]) - 1.0).abs() < 1e-12);
        }
        let data = generate_rings(10, &[1.0, 3.0], 0.0, 5).unwrap();
        for (row, &label) in data.rows().zip(data.truth_labels().unwrap()) {
            let r = if label == 0 { 1.0 } else { 3.0 };
            assert!((row[0].hypot(row[1]) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn rings_validate_radii_and_are_deterministic() {
        assert!(generate_rings(4, &[2.0, 1.0], 0.1, 0).is_err());
        assert!(generate_rings(4, &[1.0, 1.0], 0.1, 0).is_err());
        assert_eq!(
            generate_rings(30, &[1.0, 2.0], 0.1, 4).unwrap(),
            generate_rings(30, &[1.0, 2.0], 0.1, 4).unwrap()
        );
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn standardize_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..30)) {
                let data = DataSet::from_rows(&rows).unwrap();
                let once = standardize(&data).unwrap();
                let twice = standardize(&once).unwrap();
                for (a, b) in once.values().iter().zip(twice.values()) {
                    prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
                }
            }
        }
    }
}
