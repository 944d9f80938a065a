use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fix_sign, norm, Embedding};
use crate::error::{Error, Result};
use crate::graph::{laplacian_components, LaplacianMatrix};

/// Above this many vertices `Auto` switches from the dense solver to Lanczos.
pub const DENSE_LIMIT: usize = 2000;

const LANCZOS_SEED: u64 = 0x5eed_1a7c;
const MAX_RESTARTS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// Eigenvectors of the `dim` smallest nontrivial eigenvalues, skipping one
/// null vector per connected component. Columns are unit length with the
/// largest-magnitude entry made positive.
pub fn embed_eigenvectors(lap: &LaplacianMatrix, dim: usize) -> Result<Embedding> {
    embed_eigenvectors_with(lap, dim, EigenSolver::Auto)
}

pub fn embed_eigenvectors_with(lap: &LaplacianMatrix, dim: usize, solver: EigenSolver) -> Result<Embedding> {
    let n = lap.n();
    if dim == 0 || dim >= n {
        return Err(Error::invalid(format!("embedding dimension must satisfy 1 <= K < n, got K = {dim}, n = {n}")));
    }
    let comps = laplacian_components(lap);
    let num_comps = comps.iter().max().map_or(0, |&c| c + 1);
    if dim > n - num_comps {
        return Err(Error::invalid(format!(
            "graph has {num_comps} components, so only {} nontrivial eigenvectors exist (K = {dim})",
            n - num_comps
        )));
    }

    let use_dense = match solver {
        EigenSolver::Dense => true,
        EigenSolver::Lanczos => false,
        EigenSolver::Auto => n <= DENSE_LIMIT,
    };
    let (values, mut columns) = if use_dense {
        dense_bottom(lap, num_comps, dim)
    } else {
        let deflate = indicator_vectors(&comps, num_comps);
        lanczos_bottom(lap, dim, &deflate)
    };
    columns.iter_mut().for_each(|c| fix_sign(c));
    let mut emb = Embedding::from_columns(n, &columns)?;
    emb.eigenvalues = Some(values);
    Ok(emb)
}

fn dense_bottom(lap: &LaplacianMatrix, skip: usize, dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(lap.to_dense());
    let mut order: Vec<usize> = (0..lap.n()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    order[skip..skip + dim]
        .iter()
        .map(|&i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
        .unzip()
}

fn indicator_vectors(comps: &[usize], num_comps: usize) -> Vec<Vec<f64>> {
    let mut sizes = vec![0usize; num_comps];
    comps.iter().for_each(|&c| sizes[c] += 1);
    (0..num_comps)
        .map(|c| {
            let v = 1.0 / (sizes[c] as f64).sqrt();
            comps.iter().map(|&cc| if cc == c { v } else { 0.0 }).collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Classical Gram-Schmidt applied twice against every vector in `sets`.
fn orthogonalize(v: &mut [f64], sets: &[&[Vec<f64>]]) {
    for _ in 0..2 {
        for set in sets {
            for u in set.iter() {
                let c = dot(v, u);
                axpy(-c, u, v);
            }
        }
    }
}

/// Explicitly restarted Lanczos with full reorthogonalization and locking of
/// converged Ritz pairs. `deflate` spans the known null space.
fn lanczos_bottom(lap: &LaplacianMatrix, dim: usize, deflate: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = lap.n();
    let n_eff = n - deflate.len();
    // Gershgorin bound on the spectral radius.
    let scale = 2.0 * lap.diagonal().iter().fold(1.0f64, |m, &d| m.max(d));
    let tol = 1e-8 * scale;
    let basis_size = n_eff.min((4 * dim + 40).max(120));

    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };

    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked_vecs: Vec<Vec<f64>> = Vec::new();
    let mut start = random_vec(&mut rng);
    let mut fallback: Vec<(f64, Vec<f64>)> = Vec::new();

    for _ in 0..MAX_RESTARTS {
        let need = dim - locked_vecs.len();
        if need == 0 {
            break;
        }
        let m = basis_size.min(n_eff - locked_vecs.len());

        let mut v = start.clone();
        orthogonalize(&mut v, &[deflate, &locked_vecs]);
        let mut nv = norm(&v);
        while nv < 1e-10 {
            v = random_vec(&mut rng);
            orthogonalize(&mut v, &[deflate, &locked_vecs]);
            nv = norm(&v);
        }
        v.iter_mut().for_each(|x| *x /= nv);

        let mut basis: Vec<Vec<f64>> = vec![v];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for j in 0..m {
            let mut w = lap.mul_vec(&basis[j]);
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            orthogonalize(&mut w, &[deflate, &locked_vecs, &basis]);
            let b = norm(&w);
            if j + 1 == m || b < 1e-10 * scale {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(w);
        }

        let k = alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let mut unconverged = Vec::new();
        for &idx in order.iter().take(need) {
            let theta = eig.eigenvalues[idx];
            let mut y = vec![0.0; n];
            for (i, b) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(i, idx)], b, &mut y);
            }
            let ny = norm(&y);
            y.iter_mut().for_each(|x| *x /= ny);
            let mut r = lap.mul_vec(&y);
            axpy(-theta, &y, &mut r);
            if norm(&r) <= tol {
                locked_vals.push(theta);
                locked_vecs.push(y);
            } else {
                unconverged.push((theta, y));
            }
        }
        if unconverged.is_empty() {
            continue;
        }
        // Small random component so repeated eigenvalues are not missed.
        start = random_vec(&mut rng);
        start.iter_mut().for_each(|x| *x *= 1e-4 / (n as f64).sqrt());
        for (_, y) in &unconverged {
            axpy(1.0, y, &mut start);
        }
        fallback = unconverged;
    }

    if locked_vecs.len() < dim {
        log::warn!(
            "Lanczos locked {} of {dim} eigenpairs within tolerance; using best Ritz approximations for the rest",
            locked_vecs.len()
        );
        for (theta, y) in fallback.into_iter().take(dim - locked_vecs.len()) {
            locked_vals.push(theta);
            locked_vecs.push(y);
        }
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = locked_vals.into_iter().zip(locked_vecs).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
