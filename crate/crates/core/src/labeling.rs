//! Cluster labeling by sphere-interior connectivity: two points share a
//! cluster when the segment between them stays inside the trained sphere.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::svdd::SvddModel;
use crate::union_find::UnionFind;

pub const OUTLIER: i64 = -1;

/// Pair tests run in chunks of this size; pairs already joined by an
/// earlier chunk are skipped.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyParams {
    /// Interior samples per segment.
    pub m: usize,
    /// Slack added to R² in the interior test.
    pub r_margin: f64,
}

impl AdjacencyParams {
    pub fn new(m: usize, r_margin: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("segment sample count m must be at least 1"));
        }
        if !(r_margin >= 0.0) {
            return Err(Error::invalid(format!("r_margin must be non-negative, got {r_margin}")));
        }
        Ok(Self { m, r_margin })
    }

    /// Margin `1e-6·R²` plus the model's final KKT violation, so points the
    /// solver places on the surface test as interior.
    pub fn for_model(model: &SvddModel, m: usize) -> Result<Self> {
        Self::new(m, 1e-6 * model.r_squared() + model.kkt_violation())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierPolicy {
    /// Points outside the sphere get [`OUTLIER`].
    #[default]
    Mark,
    /// Points outside the sphere take the label of the nearest labeled point.
    AssignNearest,
}

fn interior(model: &SvddModel, x: &[f64], params: &AdjacencyParams) -> bool {
    model.radius2_unchecked(x) <= model.r_squared() + params.r_margin
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// True when both endpoints and the `m` evenly spaced interior points
/// `a + t/(m+1)·(b - a)` all satisfy `f(y) <= R² + r_margin`.
pub fn adjacent(model: &SvddModel, a: &[f64], b: &[f64], params: &AdjacencyParams) -> Result<bool> {
    for p in [a, b] {
        if p.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: p.len(),
            });
        }
    }
    Ok(adjacent_unchecked(model, a, b, params))
}

fn adjacent_unchecked(model: &SvddModel, a: &[f64], b: &[f64], params: &AdjacencyParams) -> bool {
    // Sample from the lexicographically smaller endpoint so the test is
    // exactly symmetric.
    let (a, b) = if lexicographic(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    if !interior(model, a, params) || !interior(model, b, params) {
        return false;
    }
    segment_interior(model, a, b, params)
}

fn segment_interior(model: &SvddModel, a: &[f64], b: &[f64], params: &AdjacencyParams) -> bool {
    let mut y = vec![0.0; a.len()];
    (1..=params.m).all(|t| {
        let s = t as f64 / (params.m + 1) as f64;
        for ((yi, ai), bi) in y.iter_mut().zip(a).zip(b) {
            *yi = ai + s * (bi - ai);
        }
        interior(model, &y, params)
    })
}

fn check_points(model: &SvddModel, points: &DataSet) -> Result<()> {
    if points.d() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: points.d(),
        });
    }
    Ok(())
}

/// Original SVC labeling: connected components of the adjacency relation
/// over all pairs of points.
pub fn label_complete_graph(model: &SvddModel, points: &DataSet, params: &AdjacencyParams, policy: OutlierPolicy) -> Result<Vec<i64>> {
    check_points(model, points)?;
    let inside = interior_mask(model, points, params);
    let n = points.n();
    let mut uf = UnionFind::new(n);
    for i in (0..n).filter(|&i| inside[i]) {
        let mut rest = (i + 1..n).filter(|&j| inside[j]).peekable();
        while rest.peek().is_some() {
            let chunk: Vec<usize> = rest.by_ref().filter(|&j| !uf.same(i, j)).take(CHUNK).collect();
            join_adjacent(model, points, params, &mut uf, chunk.into_iter().map(|j| (i, j)));
        }
    }
    Ok(finish_labels(points, &inside, &mut uf, policy))
}

/// Proximity-graph labeling: the adjacency test is applied only along the
/// edges of `graph`.
pub fn label_proximity_graph(
    model: &SvddModel,
    points: &DataSet,
    graph: &Graph,
    params: &AdjacencyParams,
    policy: OutlierPolicy,
) -> Result<Vec<i64>> {
    check_points(model, points)?;
    if graph.num_vertices() != points.n() {
        return Err(Error::DimensionMismatch {
            expected: points.n(),
            got: graph.num_vertices(),
        });
    }
    let inside = interior_mask(model, points, params);
    let mut uf = UnionFind::new(points.n());
    let mut edges = graph.edges().iter().filter(|e| inside[e.p] && inside[e.q]).peekable();
    while edges.peek().is_some() {
        let chunk: Vec<(usize, usize)> = edges.by_ref().filter(|e| !uf.same(e.p, e.q)).take(CHUNK).map(|e| (e.p, e.q)).collect();
        join_adjacent(model, points, params, &mut uf, chunk.into_iter());
    }
    Ok(finish_labels(points, &inside, &mut uf, policy))
}

fn interior_mask(model: &SvddModel, points: &DataSet, params: &AdjacencyParams) -> Vec<bool> {
    (0..points.n()).into_par_iter().map(|i| interior(model, points.row(i), params)).collect()
}

/// Tests the pairs in parallel, then merges in the given order. Endpoints
/// are already known to be interior.
fn join_adjacent(
    model: &SvddModel,
    points: &DataSet,
    params: &AdjacencyParams,
    uf: &mut UnionFind,
    pairs: impl Iterator<Item = (usize, usize)>,
) {
    let pairs: Vec<(usize, usize)> = pairs.collect();
    let linked: Vec<bool> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (points.row(i), points.row(j));
            let (a, b) = if lexicographic(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
            segment_interior(model, a, b, params)
        })
        .collect();
    for ((i, j), ok) in pairs.into_iter().zip(linked) {
        if ok {
            uf.union(i, j);
        }
    }
}

/// Dense labels over interior points, numbered by smallest member index,
/// with the outlier policy applied to the rest.
fn finish_labels(points: &DataSet, inside: &[bool], uf: &mut UnionFind, policy: OutlierPolicy) -> Vec<i64> {
    let n = points.n();
    let mut root_label = vec![OUTLIER; n];
    let mut next = 0;
    let mut labels = vec![OUTLIER; n];
    for i in (0..n).filter(|&i| inside[i]) {
        let r = uf.find(i);
        if root_label[r] == OUTLIER {
            root_label[r] = next;
            next += 1;
        }
        labels[i] = root_label[r];
    }
    if policy == OutlierPolicy::AssignNearest && next > 0 {
        let labeled: Vec<usize> = (0..n).filter(|&i| inside[i]).collect();
        let assigned: Vec<(usize, i64)> = (0..n)
            .into_par_iter()
            .filter(|&i| !inside[i])
            .map(|i| {
                let nearest = labeled
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        sq_dist(points.row(i), points.row(a))
                            .total_cmp(&sq_dist(points.row(i), points.row(b)))
                            .then(a.cmp(&b))
                    })
                    .expect("at least one labeled point");
                (i, labels[nearest])
            })
            .collect();
        for (i, l) in assigned {
            labels[i] = l;
        }
    }
    labels
}
