//! Fixtures and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spsvc::data::{generate_blobs, generate_rings, DataSet};
use spsvc::pipeline::{Method, PipelineConfig, QSetting};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two unit-spread blobs ten spreads apart, 200 points each.
pub fn two_blobs() -> DataSet {
    generate_blobs(200, &[vec![0.0, 0.0], vec![10.0, 0.0]], 1.0, 7).unwrap()
}

pub const TWO_BLOBS_Q: f64 = 0.1;

/// Rings of radius 1 and 3, 150 points each.
pub fn rings() -> DataSet {
    generate_rings(150, &[1.0, 3.0], 0.1, 3).unwrap()
}

pub const RINGS_Q: f64 = 0.6;

/// Five unit-spread blobs on a circle of radius 10, 500 points each.
pub fn five_blobs() -> DataSet {
    let centers: Vec<Vec<f64>> = (0..5)
        .map(|i| {
            let a = i as f64 * 2.0 * PI / 5.0;
            vec![10.0 * a.cos(), 10.0 * a.sin()]
        })
        .collect();
    generate_blobs(500, &centers, 1.0, 11).unwrap()
}

pub const FIVE_BLOBS_Q: f64 = 0.1;

/// Pipeline settings for the fixtures above. They are generated isotropic
/// and on a common scale, so per-column standardization would only distort
/// them.
pub fn fixture_config(method: Method, q: f64) -> PipelineConfig {
    PipelineConfig {
        method,
        q: QSetting::Value(q),
        standardize: false,
        ..Default::default()
    }
}

/// Uniform points in `[-scale, scale]^d`.
pub fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DataSet {
    let values = (0..n * d).map(|_| rng.random_range(-scale..scale)).collect();
    DataSet::new(n, d, values).unwrap()
}

pub fn gram(data: &DataSet, q: f64) -> DMatrix<f64> {
    let n = data.n();
    DMatrix::from_fn(n, n, |i, j| {
        let d2: f64 = data.row(i).iter().zip(data.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        (-q * d2).exp()
    })
}

/// Euclidean projection onto `{β : Σβ = 1, 0 ≤ β ≤ c}` by bisection on the
/// shift `τ` in `β = clip(v - τ, 0, c)`.
pub fn project_box_simplex(v: &DVector<f64>, c: f64) -> DVector<f64> {
    let mass = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, c)).sum::<f64>();
    let mut lo = v.min() - c - 1.0;
    let mut hi = v.max() + 1.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.map(|x| (x - tau).clamp(0.0, c))
}

/// Maximizes `W(β) = Σβ_i K_ii - βᵀKβ` over the box-simplex with
/// accelerated projected gradient (adaptive restart), then polishes by
/// solving the equality-constrained system on the detected free set.
/// Returns `(β, W)`.
pub fn svdd_dual_oracle(k: &DMatrix<f64>, c: f64) -> (DVector<f64>, f64) {
    let n = k.nrows();
    let diag = k.diagonal();
    let w_of = |b: &DVector<f64>| diag.dot(b) - (b.transpose() * k * b)[(0, 0)];
    let lipschitz = 2.0 * k.clone().symmetric_eigenvalues().max().max(1e-12);

    let mut x = project_box_simplex(&DVector::from_element(n, 1.0 / n as f64), c);
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    let mut w_prev = w_of(&x);
    for it in 1..=30_000 {
        // ascent direction of W
        let grad = &diag - 2.0 * (k * &y);
        let x_next = project_box_simplex(&(&y + grad / lipschitz), c);
        let w_next = w_of(&x_next);
        if w_next < w_prev {
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
        x = x_next;
        t = t_next;
        w_prev = w_next;
        if it % 200 == 0 {
            if let Some(p) = polish(k, &x, c).filter(|p| kkt_gap(k, p, c) <= 1e-12) {
                return (p.clone(), w_of(&p));
            }
        }
    }

    let mut best = (x.clone(), w_of(&x));
    if let Some(polished) = polish(k, &x, c) {
        let w = w_of(&polished);
        if w > best.1 {
            best = (polished, w);
        }
    }
    best
}

/// Largest first-order optimality violation of `β`: the gradient of `W`
/// must be no larger on coordinates that can grow than on those that can
/// shrink.
fn kkt_gap(k: &DMatrix<f64>, beta: &DVector<f64>, c: f64) -> f64 {
    let grad = k.diagonal() - 2.0 * (k * beta);
    let mut up = f64::NEG_INFINITY;
    let mut down = f64::INFINITY;
    for (i, &g) in grad.iter().enumerate() {
        if beta[i] < c {
            up = up.max(g);
        }
        if beta[i] > 0.0 {
            down = down.min(g);
        }
    }
    (up - down).max(0.0)
}

fn polish(k: &DMatrix<f64>, x: &DVector<f64>, c: f64) -> Option<DVector<f64>> {
    let n = x.len();
    let eps = 1e-9;
    let free: Vec<usize> = (0..n).filter(|&i| x[i] > eps && x[i] < c - eps).collect();
    let bounded: Vec<usize> = (0..n).filter(|&i| x[i] >= c - eps).collect();
    if free.is_empty() {
        return None;
    }
    let f = free.len();
    // [2K_FF  1] [β_F]   [diag_F - 2 K_FB c 1]
    // [1ᵀ     0] [-μ ] = [1 - c|B|           ]
    let mut a = DMatrix::zeros(f + 1, f + 1);
    let mut rhs = DVector::zeros(f + 1);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            a[(r, s)] = 2.0 * k[(i, j)];
        }
        a[(r, f)] = 1.0;
        a[(f, r)] = 1.0;
        rhs[r] = k[(i, i)] - 2.0 * bounded.iter().map(|&j| k[(i, j)] * c).sum::<f64>();
    }
    rhs[f] = 1.0 - c * bounded.len() as f64;
    let sol = a.lu().solve(&rhs)?;
    let mut out = DVector::zeros(n);
    for &j in &bounded {
        out[j] = c;
    }
    for (r, &i) in free.iter().enumerate() {
        if !(sol[r] >= -1e-12 && sol[r] <= c + 1e-12) {
            return None;
        }
        out[i] = sol[r].clamp(0.0, c);
    }
    Some(out)
}

/// NMI straight from the probability definitions:
/// `I(P;T) / sqrt(H(P) H(T))` with natural logarithms.
pub fn nmi_oracle(pred: &[i64], truth: &[i64]) -> f64 {
    let n = pred.len() as f64;
    let mut joint: HashMap<(i64, i64), f64> = HashMap::new();
    let mut pp: HashMap<i64, f64> = HashMap::new();
    let mut pt: HashMap<i64, f64> = HashMap::new();
    for (&a, &b) in pred.iter().zip(truth) {
        *joint.entry((a, b)).or_default() += 1.0 / n;
        *pp.entry(a).or_default() += 1.0 / n;
        *pt.entry(b).or_default() += 1.0 / n;
    }
    let entropy = |m: &HashMap<i64, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let (hp, ht) = (entropy(&pp), entropy(&pt));
    if pp.len() == 1 || pt.len() == 1 {
        return if pp.len() == 1 && pt.len() == 1 { 1.0 } else { 0.0 };
    }
    let mi: f64 = joint.iter().map(|(&(a, b), &p)| p * (p / (pp[&a] * pt[&b])).ln()).sum();
    mi / (hp * ht).sqrt()
}

/// Random labels with values drawn from `0..k`.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: i64) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}
