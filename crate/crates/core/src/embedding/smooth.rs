use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{norm, Embedding};
use crate::error::{Error, Result};
use crate::graph::{laplacian_components, LaplacianMatrix};

/// One forward Gauss-Seidel pass on `L x = 0` in ascending vertex order:
/// `x_i <- Σ_j w_ij x_j / d_i`. Vertices of zero degree are left unchanged.
pub fn gauss_seidel_sweep(lap: &LaplacianMatrix, x: &mut [f64]) {
    let diag = lap.diagonal();
    for i in 0..lap.n() {
        if diag[i] > 0.0 {
            let acc: f64 = lap.off_diagonal(i).map(|(j, w)| w * x[j]).sum();
            x[i] = acc / diag[i];
        }
    }
}

/// `dim` smoothed vectors: random ±1 starts relaxed by `sweeps` Gauss-Seidel
/// passes, then centered per connected component and unit-normalized.
///
/// A component on which a vector has collapsed to a constant contributes
/// zeros; columns that are zero everywhere are kept as zero columns. If every
/// column collapses the embedding carries no information and an error is
/// returned.
pub fn embed_smoothed(lap: &LaplacianMatrix, dim: usize, sweeps: usize, seed: u64) -> Result<Embedding> {
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be at least 1"));
    }
    if sweeps == 0 {
        return Err(Error::invalid("at least one Gauss-Seidel sweep is required"));
    }
    let n = lap.n();
    let comps = laplacian_components(lap);
    let num_comps = comps.iter().max().map_or(0, |&c| c + 1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();

    let columns: Vec<Vec<f64>> = starts
        .into_par_iter()
        .map(|mut x| {
            for _ in 0..sweeps {
                gauss_seidel_sweep(lap, &mut x);
            }
            center_per_component(&mut x, &comps, num_comps);
            let nx = norm(&x);
            if nx > 0.0 {
                x.iter_mut().for_each(|v| *v /= nx);
            }
            x
        })
        .collect();

    let degenerate = columns.iter().filter(|c| c.iter().all(|&v| v == 0.0)).count();
    if degenerate == dim {
        return Err(Error::Degenerate(format!(
            "all {dim} smoothed vectors collapsed to constants on every component; \
             increase K or use the eigenvector backend"
        )));
    }
    if degenerate > 0 {
        log::debug!("{degenerate} of {dim} smoothed vectors are degenerate");
    }
    Embedding::from_columns(n, &columns)
}

/// Removes the per-component mean. Components whose centered values are at
/// round-off level relative to their magnitude are zeroed.
fn center_per_component(x: &mut [f64], comps: &[usize], num_comps: usize) {
    let mut sum = vec![0.0; num_comps];
    let mut count = vec![0usize; num_comps];
    let mut before = vec![0.0; num_comps];
    for (v, &c) in x.iter().zip(comps) {
        sum[c] += v;
        count[c] += 1;
        before[c] += v * v;
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &k)| s / k as f64).collect();
    let mut after = vec![0.0; num_comps];
    for (v, &c) in x.iter_mut().zip(comps) {
        *v -= mean[c];
        after[c] += *v * *v;
    }
    for (v, &c) in x.iter_mut().zip(comps) {
        if after[c] <= 1e-24 * before[c] {
            *v = 0.0;
        }
    }
}
