//! Symmetrized k-nearest-neighbor graphs and their combinatorial Laplacian.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::union_find::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub p: usize,
    pub q: usize,
    pub w: f64,
}

/// Undirected weighted graph without self-loops. Each edge is stored once
/// with `p < q`; `adjacency[v]` lists `(neighbor, weight)` sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_vertices: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Graph {
    pub fn from_edges(num_vertices: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut normalized = Vec::new();
        for Edge { p, q, w } in edges {
            if p == q {
                return Err(Error::invalid(format!("self-loop at vertex {p}")));
            }
            if p >= num_vertices || q >= num_vertices {
                return Err(Error::invalid(format!("edge ({p}, {q}) out of range for {num_vertices} vertices")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("edge ({p}, {q}) has non-positive weight {w}")));
            }
            normalized.push(Edge { p: p.min(q), q: p.max(q), w });
        }
        normalized.sort_by(|a, b| (a.p, a.q).cmp(&(b.p, b.q)));
        if let Some(dup) = normalized.windows(2).find(|e| (e[0].p, e[0].q) == (e[1].p, e[1].q)) {
            return Err(Error::invalid(format!("duplicate edge ({}, {})", dup[0].p, dup[0].q)));
        }
        let mut adjacency = vec![Vec::new(); num_vertices];
        for e in &normalized {
            adjacency[e.p].push((e.q, e.w));
            adjacency[e.q].push((e.p, e.w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        Ok(Self {
            num_vertices,
            edges: normalized,
            adjacency,
        })
    }

    /// Every pair connected with unit weight.
    pub fn complete(num_vertices: usize) -> Self {
        let edges = (0..num_vertices).flat_map(|p| (p + 1..num_vertices).map(move |q| Edge { p, q, w: 1.0 }));
        Self::from_edges(num_vertices, edges).expect("complete graph is valid")
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn weight(&self, p: usize, q: usize) -> Option<f64> {
        let list = &self.adjacency[p];
        list.binary_search_by_key(&q, |&(v, _)| v).ok().map(|i| list[i].1)
    }

    /// One `p q w` line per edge.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.p, e.q, e.w).map_err(|err| Error::io(path, err))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_edge_list(path: &Path, num_vertices: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parse_err = |msg: String| Error::Parse { row: i + 1, col: None, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [p, q, w] = fields[..] else {
                return Err(parse_err(format!("expected `p q w`, got {line:?}")));
            };
            edges.push(Edge {
                p: p.parse().map_err(|e| parse_err(format!("{e}")))?,
                q: q.parse().map_err(|e| parse_err(format!("{e}")))?,
                w: w.parse().map_err(|e| parse_err(format!("{e}")))?,
            });
        }
        Self::from_edges(num_vertices, edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `exp(-d² / σ²)` with σ² the mean squared k-th neighbor distance.
    #[default]
    Gaussian,
    Unit,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Weighting::Gaussian),
            "unit" => Ok(Weighting::Unit),
            other => Err(Error::Config(format!("unknown weighting {other:?} (expected gaussian|unit)"))),
        }
    }
}

/// Source of per-point neighbor lists. Implementations must return, for each
/// query point, its `k` nearest other points as `(index, squared distance)`
/// sorted by distance with ties broken by lower index.
pub trait NeighborSearch {
    fn k_nearest(&self, data: &DataSet, k: usize) -> Vec<Vec<(usize, f64)>>;
}

/// Exact O(n²d) scan.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForce;

impl NeighborSearch for BruteForce {
    fn k_nearest(&self, data: &DataSet, k: usize) -> Vec<Vec<(usize, f64)>> {
        (0..data.n())
            .into_par_iter()
            .map(|i| {
                let xi = data.row(i);
                let mut cand: Vec<(usize, f64)> = (0..data.n())
                    .filter(|&j| j != i)
                    .map(|j| (j, sq_dist(xi, data.row(j))))
                    .collect();
                let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
                if k < cand.len() {
                    cand.select_nth_unstable_by(k - 1, by_dist);
                    cand.truncate(k);
                }
                cand.sort_by(by_dist);
                cand
            })
            .collect()
    }
}

pub fn build_knn_graph(data: &DataSet, k: usize, weighting: Weighting) -> Result<Graph> {
    build_knn_graph_with(&BruteForce, data, k, weighting)
}

/// Union-symmetrized k-NN graph: `(p, q)` is an edge if either endpoint
/// selects the other.
pub fn build_knn_graph_with(search: &impl NeighborSearch, data: &DataSet, k: usize, weighting: Weighting) -> Result<Graph> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k must satisfy 1 <= k < n, got k = {k}, n = {n}")));
    }
    let lists = search.k_nearest(data, k);
    let sigma2 = lists.iter().map(|l| l[k - 1].1).sum::<f64>() / n as f64;

    let mut pairs: Vec<(usize, usize, f64)> = lists
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.iter().map(move |&(j, d2)| (i.min(j), i.max(j), d2)))
        .collect();
    pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    pairs.dedup_by(|a, b| (a.0, a.1) == (b.0, b.1));

    let edges = pairs.into_iter().map(|(p, q, d2)| {
        let w = match weighting {
            Weighting::Unit => 1.0,
            Weighting::Gaussian if sigma2 > 0.0 => (-d2 / sigma2).exp().max(f64::MIN_POSITIVE),
            Weighting::Gaussian => 1.0,
        };
        Edge { p, q, w }
    });
    Graph::from_edges(n, edges)
}

/// Sparse symmetric Laplacian in CSR form; each row holds its diagonal and
/// off-diagonal entries sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

impl LaplacianMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// Off-diagonal entries of row `i` as `(column, -L[i][column])`, i.e.
    /// the positive edge weights.
    pub fn off_diagonal(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(i).filter(move |&(j, _)| j != i).map(|(j, v)| (j, -v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// `L(p,q) = -w(p,q)` on edges, `L(p,p) = Σ_t w(p,t)`, zero elsewhere.
pub fn laplacian(graph: &Graph) -> LaplacianMatrix {
    let n = graph.num_vertices();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(n + 2 * graph.edges().len());
    let mut values = Vec::with_capacity(col_idx.capacity());
    let mut diag = Vec::with_capacity(n);
    row_ptr.push(0);
    for v in 0..n {
        let nbrs = graph.neighbors(v);
        let degree: f64 = nbrs.iter().map(|&(_, w)| w).sum();
        let split = nbrs.partition_point(|&(u, _)| u < v);
        for &(u, w) in &nbrs[..split] {
            col_idx.push(u);
            values.push(-w);
        }
        col_idx.push(v);
        values.push(degree);
        for &(u, w) in &nbrs[split..] {
            col_idx.push(u);
            values.push(-w);
        }
        diag.push(degree);
        row_ptr.push(col_idx.len());
    }
    LaplacianMatrix {
        n,
        row_ptr,
        col_idx,
        values,
        diag,
    }
}

/// Component id per vertex, numbered by smallest contained vertex.
pub fn connected_components(graph: &Graph) -> Vec<usize> {
    let mut uf = UnionFind::new(graph.num_vertices());
    for e in graph.edges() {
        uf.union(e.p, e.q);
    }
    uf.labels()
}

/// Components of the graph underlying a Laplacian (nonzero off-diagonals).
pub(crate) fn laplacian_components(lap: &LaplacianMatrix) -> Vec<usize> {
    let mut uf = UnionFind::new(lap.n());
    for i in 0..lap.n() {
        for (j, _) in lap.off_diagonal(i) {
            uf.union(i, j);
        }
    }
    uf.labels()
}
