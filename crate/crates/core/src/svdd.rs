//! Minimal enclosing hypersphere in Gaussian-kernel feature space.
//!
//! The dual
//!
//! ```text
//! maximize   W(β) = Σ_j β_j K(x_j, x_j) - Σ_{i,j} β_i β_j K(x_i, x_j)
//! subject to Σ_j β_j = 1,  0 <= β_j <= C
//! ```
//!
//! is solved by pairwise (SMO-style) ascent: each step moves mass from the
//! multiplier with the largest gradient to the one with the smallest, with
//! the step length solved analytically and clipped to the box.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};

/// Multipliers at or below this are treated as zero (and within it of `C` as
/// bounded) when classifying points.
pub const ROLE_TOL: f64 = 1e-6;

/// Above this many points the Gram matrix is not materialized.
const DENSE_GRAM_LIMIT: usize = 4000;
const ROW_CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    q: f64,
    c: f64,
}

impl KernelParams {
    pub fn new(q: f64, c: f64) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::invalid(format!("kernel width q must be positive, got {q}")));
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::invalid(format!("box bound C must lie in (0, 1], got {c}")));
        }
        Ok(Self { q, c })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `C < 1/n` leaves no β with `Σβ = 1`.
    pub fn check_feasible(&self, n: usize) -> Result<()> {
        if self.c * (n as f64) < 1.0 - 1e-12 {
            return Err(Error::Infeasible {
                c: self.c,
                min: 1.0 / n as f64,
            });
        }
        Ok(())
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        (-self.q * sq_dist(a, b)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Stop once the maximal KKT violation drops to this value.
    pub tol: f64,
    /// Iteration cap, in multiples of the training set size.
    pub max_passes: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_passes: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointRole {
    Inside,
    SupportVector,
    BoundedSupportVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvddModel {
    beta: Vec<f64>,
    points: DataSetRows,
    params: KernelParams,
    r_squared: f64,
    /// `Σ_{i,j} β_i β_j K(x_i, x_j)`
    beta_k_beta: f64,
    /// Indices with `β > 0`.
    support: Vec<usize>,
    /// Maximal KKT violation at termination.
    kkt_violation: f64,
    tol: f64,
    converged: bool,
    iterations: usize,
}

/// Row storage of the training points, serialized as nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
struct DataSetRows(DataSet);

impl From<DataSetRows> for Vec<Vec<f64>> {
    fn from(rows: DataSetRows) -> Self {
        rows.0.rows().map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for DataSetRows {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DataSet::from_rows(&rows).map(DataSetRows)
    }
}

impl SvddModel {
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn train_points(&self) -> &DataSet {
        &self.points.0
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn r_squared(&self) -> f64 {
        self.r_squared
    }

    pub fn kkt_violation(&self) -> f64 {
        self.kkt_violation
    }

    /// KKT tolerance the model was trained with.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn dim(&self) -> usize {
        self.points.0.d()
    }

    /// Dual objective `W(β)`.
    pub fn objective(&self) -> f64 {
        1.0 - self.beta_k_beta
    }

    pub fn point_role(&self, i: usize) -> PointRole {
        role_of(self.beta[i], self.params.c)
    }

    pub fn indices_with_role(&self, role: PointRole) -> Vec<usize> {
        (0..self.beta.len()).filter(|&i| self.point_role(i) == role).collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Squared feature-space distance from `x` to the sphere center:
    /// `f(x) = 1 - 2 Σ_j β_j K(x_j, x) + Σ_{i,j} β_i β_j K(x_i, x_j)`.
    pub fn radius2(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.radius2_unchecked(x))
    }

    pub(crate) fn radius2_unchecked(&self, x: &[f64]) -> f64 {
        let pts = &self.points.0;
        let cross: f64 = self.support.iter().map(|&j| self.beta[j] * self.params.kernel(pts.row(j), x)).sum();
        (1.0 - 2.0 * cross + self.beta_k_beta).max(0.0)
    }

    /// `∇f(x) = 4q Σ_j β_j (x - x_j) exp(-q‖x - x_j‖²)`
    pub fn radius2_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.radius2_and_gradient(x).1)
    }

    pub(crate) fn radius2_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let pts = &self.points.0;
        let q = self.params.q;
        let mut grad = vec![0.0; x.len()];
        let mut cross = 0.0;
        for &j in &self.support {
            let xj = pts.row(j);
            let wk = self.beta[j] * self.params.kernel(xj, x);
            cross += wk;
            for ((g, a), b) in grad.iter_mut().zip(x).zip(xj) {
                *g += wk * (a - b);
            }
        }
        grad.iter_mut().for_each(|g| *g *= 4.0 * q);
        ((1.0 - 2.0 * cross + self.beta_k_beta).max(0.0), grad)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self).map_err(|e| Error::invalid(format!("serializing model: {e}")))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::invalid(format!("reading model {}: {e}", path.display())))
    }
}

fn role_of(beta: f64, c: f64) -> PointRole {
    if beta <= ROLE_TOL {
        PointRole::Inside
    } else if beta >= c - ROLE_TOL {
        PointRole::BoundedSupportVector
    } else {
        PointRole::SupportVector
    }
}

/// Gram matrix access: materialized for small sets, otherwise rows computed
/// on demand with a FIFO cache.
enum Gram<'a> {
    Dense(Vec<f64>, usize),
    Lazy {
        data: &'a DataSet,
        params: KernelParams,
        cache: HashMap<usize, Vec<f64>>,
        order: VecDeque<usize>,
        capacity: usize,
    },
}

impl<'a> Gram<'a> {
    fn new(data: &'a DataSet, params: KernelParams) -> Self {
        let n = data.n();
        if n <= DENSE_GRAM_LIMIT {
            let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| kernel_row(data, params, i)).collect();
            Gram::Dense(rows.concat(), n)
        } else {
            Gram::Lazy {
                data,
                params,
                cache: HashMap::new(),
                order: VecDeque::new(),
                capacity: (ROW_CACHE_BYTES / (8 * n)).max(2),
            }
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        match self {
            Gram::Dense(k, n) => &k[i * *n..(i + 1) * *n],
            Gram::Lazy {
                data,
                params,
                cache,
                order,
                capacity,
            } => {
                if !cache.contains_key(&i) {
                    if order.len() >= *capacity {
                        if let Some(old) = order.pop_front() {
                            cache.remove(&old);
                        }
                    }
                    cache.insert(i, kernel_row(data, *params, i));
                    order.push_back(i);
                }
                &cache[&i]
            }
        }
    }
}

fn kernel_row(data: &DataSet, params: KernelParams, i: usize) -> Vec<f64> {
    let xi = data.row(i);
    data.rows().map(|xj| params.kernel(xi, xj)).collect()
}

/// Trains the hypersphere by pairwise ascent on the dual.
///
/// The returned model carries `converged = false` when the iteration cap
/// was hit before the KKT violation fell below `opts.tol`.
pub fn train(data: &DataSet, params: KernelParams, opts: &TrainOptions) -> Result<SvddModel> {
    let n = data.n();
    params.check_feasible(n)?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let c = params.c;

    // Fill multipliers up to C in index order until the mass is placed.
    let mut beta = vec![0.0; n];
    let mut remaining = 1.0;
    for b in beta.iter_mut() {
        if remaining <= 0.0 {
            break;
        }
        *b = c.min(remaining);
        remaining -= *b;
    }

    let mut gram = Gram::new(data, params);
    // Gradient of F(β) = βᵀKβ - Σβ (the negated objective): G = 2Kβ - 1.
    let mut grad = vec![-1.0; n];
    for j in 0..n {
        if beta[j] > 0.0 {
            let bj = beta[j];
            gram.row(j).iter().zip(grad.iter_mut()).for_each(|(k, g)| *g += 2.0 * bj * k);
        }
    }

    let max_iter = opts.max_passes.saturating_mul(n).max(1);
    let mut iterations = 0;
    let mut violation;
    loop {
        // i: may grow (β_i < C), smallest gradient. The violation is measured
        // against the largest gradient among those that may shrink (β > 0).
        let mut up: Option<usize> = None;
        let mut g_max = f64::NEG_INFINITY;
        for k in 0..n {
            if beta[k] < c && up.is_none_or(|i| grad[k] < grad[i]) {
                up = Some(k);
            }
            if beta[k] > 0.0 {
                g_max = g_max.max(grad[k]);
            }
        }
        let Some(i) = up.filter(|_| g_max > f64::NEG_INFINITY) else {
            violation = 0.0;
            break;
        };
        violation = g_max - grad[i];
        if violation <= opts.tol || iterations >= max_iter {
            break;
        }
        // j: the shrinkable partner with the largest guaranteed gain b²/η.
        let row_i = gram.row(i);
        let mut j = i;
        let mut best_gain = f64::NEG_INFINITY;
        for k in 0..n {
            let b = grad[k] - grad[i];
            if beta[k] > 0.0 && b > 0.0 {
                let gain = b * b / (2.0 - 2.0 * row_i[k]).max(1e-12);
                if gain > best_gain {
                    best_gain = gain;
                    j = k;
                }
            }
        }
        let violation_ij = grad[j] - grad[i];

        let k_ij = gram.row(i)[j];
        let eta = 2.0 - 2.0 * k_ij;
        let mut t = if eta > 1e-12 { violation_ij / (2.0 * eta) } else { f64::INFINITY };
        let room_i = c - beta[i];
        let room_j = beta[j];
        t = t.min(room_i).min(room_j);
        debug_assert!(t * t * eta - t * violation_ij <= 1e-12, "objective must not decrease");

        if t == room_i {
            beta[i] = c;
        } else {
            beta[i] += t;
        }
        if t == room_j {
            beta[j] = 0.0;
        } else {
            beta[j] -= t;
        }
        let row_i = gram.row(i).to_vec();
        let row_j = gram.row(j);
        for ((g, ki), kj) in grad.iter_mut().zip(&row_i).zip(row_j) {
            *g += 2.0 * t * (ki - kj);
        }
        iterations += 1;
    }
    let converged = violation <= opts.tol;
    if !converged {
        log::warn!("SVDD solver hit {iterations} iterations with KKT violation {violation:.3e} > {:.1e}", opts.tol);
    }

    // Kβ = (G + 1)/2
    let k_beta: Vec<f64> = grad.iter().map(|g| (g + 1.0) / 2.0).collect();
    let beta_k_beta: f64 = beta.iter().zip(&k_beta).map(|(b, kb)| b * kb).sum();
    let f_train: Vec<f64> = k_beta.iter().map(|kb| (1.0 - 2.0 * kb + beta_k_beta).max(0.0)).collect();
    let r_squared = sphere_radius2(&beta, &f_train, c);

    Ok(SvddModel {
        support: (0..n).filter(|&i| beta[i] > 0.0).collect(),
        beta,
        points: DataSetRows(data.clone().without_labels()),
        params,
        r_squared,
        beta_k_beta,
        kkt_violation: violation,
        tol: opts.tol,
        converged,
        iterations,
    })
}

/// Mean of `f` over free support vectors. Without any, the smallest radius
/// consistent with the interior points: the largest interior `f`, or 0.
fn sphere_radius2(beta: &[f64], f_train: &[f64], c: f64) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    let mut inside_max: f64 = 0.0;
    for (&b, &f) in beta.iter().zip(f_train) {
        match role_of(b, c) {
            PointRole::SupportVector => {
                sum += f;
                count += 1;
            }
            PointRole::Inside => inside_max = inside_max.max(f),
            PointRole::BoundedSupportVector => {}
        }
    }
    if count > 0 {
        sum / count as f64
    } else {
        inside_max
    }
}

/// Bandwidth heuristic `q = 1 / (2 · median squared pairwise distance)`,
/// computed on at most 2000 points drawn with `seed`.
pub fn suggest_q(data: &DataSet, seed: u64) -> Result<f64> {
    const MAX_SAMPLE: usize = 2000;
    let n = data.n();
    if n < 2 {
        return Err(Error::invalid("suggest_q needs at least 2 points"));
    }
    let idx: Vec<usize> = if n > MAX_SAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = index::sample(&mut rng, n, MAX_SAMPLE).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let mut d2: Vec<f64> = idx
        .par_iter()
        .enumerate()
        .flat_map_iter(|(a, &i)| idx[a + 1..].iter().map(move |&j| sq_dist(data.row(i), data.row(j))))
        .collect();
    let median = median_in_place(&mut d2);
    if median <= 0.0 {
        return Err(Error::invalid("median pairwise distance is zero; points are (mostly) identical"));
    }
    Ok(1.0 / (2.0 * median))
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let m = v.len();
    let (_, hi, _) = v.select_nth_unstable_by(m / 2, f64::total_cmp);
    let hi = *hi;
    if m % 2 == 1 {
        hi
    } else {
        let lo = v[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}
