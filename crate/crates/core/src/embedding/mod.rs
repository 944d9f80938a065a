//! Per-point spectral feature vectors and the spectral similarity score.
//!
//! Two backends produce the `n × K` matrix whose rows are the embedded
//! points: exact bottom nontrivial Laplacian eigenvectors, or cheap
//! Gauss-Seidel smoothed vectors that approximate the same low-frequency
//! subspace in linear time.

mod eigen;
mod smooth;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eigen::{embed_eigenvectors, embed_eigenvectors_with, EigenSolver};
pub use smooth::{embed_smoothed, gauss_seidel_sweep};

/// Row-major `n × dim` matrix; row `u` is the feature vector of point `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    n: usize,
    dim: usize,
    vectors: Vec<f64>,
    eigenvalues: Option<Vec<f64>>,
}

impl Embedding {
    pub fn from_columns(n: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.len();
        if dim == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("embedding needs at least one column of length n"));
        }
        let mut vectors = vec![0.0; n * dim];
        for (k, col) in columns.iter().enumerate() {
            for (u, &v) in col.iter().enumerate() {
                vectors[u * dim + k] = v;
            }
        }
        Self::from_rows_flat(n, dim, vectors)
    }

    pub fn from_rows_flat(n: usize, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 || vectors.len() != n * dim {
            return Err(Error::invalid(format!("expected {n}x{dim} embedding values, got {}", vectors.len())));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite entries"));
        }
        Ok(Self {
            n,
            dim,
            vectors,
            eigenvalues: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.vectors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|u| self.vectors[u * self.dim + k]).collect()
    }

    /// Eigenvalues matching the columns, when produced by the eigenvector
    /// backend.
    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for u in 0..self.n {
            let line = self.row(u).iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingBackend {
    #[default]
    Smoothed,
    Eigen,
}

impl std::str::FromStr for EmbeddingBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoothed" => Ok(Self::Smoothed),
            "eigen" => Ok(Self::Eigen),
            other => Err(Error::Config(format!("unknown embedding backend {other:?} (expected smoothed|eigen)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub backend: EmbeddingBackend,
    pub dim: usize,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            backend: EmbeddingBackend::Smoothed,
            dim: 15,
            sweeps: 10,
            seed: 0,
        }
    }
}

/// Squared cosine of two feature vectors, `(x·y)² / ((x·x)(y·y))`. Zero when
/// either vector is all zeros.
pub fn similarity(x: &[f64], y: &[f64]) -> f64 {
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return 0.0;
    }
    ((xy * xy) / (xx * yy)).min(1.0)
}

/// Spectral similarity `s_uv` between embedded points `u` and `v`.
pub fn spectral_similarity(emb: &Embedding, u: usize, v: usize) -> f64 {
    similarity(emb.row(u), emb.row(v))
}

/// Flips each column so its largest-magnitude entry is positive; the first
/// index wins among (near-)ties.
pub(crate) fn fix_sign(col: &mut [f64]) {
    let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return;
    }
    let lead = col.iter().position(|v| v.abs() >= max * (1.0 - 1e-9)).expect("max exists");
    if col[lead] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
