//! Spectrum-preserving data compression.
//!
//! Each level builds a k-NN graph on the current points, embeds it
//! spectrally, pairs up strongly correlated neighbors by greedy matching and
//! replaces every subset with the mean of its original feature vectors.
//! Levels repeat until the requested ratio is reached.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::embedding::{embed_eigenvectors, embed_smoothed, spectral_similarity, Embedding, EmbeddingBackend, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, laplacian, laplacian_components, Graph, Weighting};

/// Surjection from `fine_count` points onto `coarse_count` subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionMap {
    coarse_count: usize,
    assign: Vec<usize>,
}

impl CompressionMap {
    pub fn new(assign: Vec<usize>) -> Result<Self> {
        let coarse_count = assign.iter().max().map_or(0, |&m| m + 1);
        let mut seen = vec![false; coarse_count];
        assign.iter().for_each(|&c| seen[c] = true);
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::invalid(format!("compression map is not surjective: coarse id {missing} unused")));
        }
        Ok(Self { coarse_count, assign })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            coarse_count: n,
            assign: (0..n).collect(),
        }
    }

    pub fn fine_count(&self) -> usize {
        self.assign.len()
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_count
    }

    pub fn assign(&self) -> &[usize] {
        &self.assign
    }

    pub fn subset_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.coarse_count];
        self.assign.iter().for_each(|&c| sizes[c] += 1);
        sizes
    }
}

/// Compression levels, finest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeMap {
    levels: Vec<CompressionMap>,
    /// Point count of an empty map; unknown when read from an empty file.
    base_count: Option<usize>,
}

impl CompositeMap {
    pub fn identity(n: usize) -> Self {
        Self {
            levels: Vec::new(),
            base_count: Some(n),
        }
    }

    pub fn from_levels(levels: Vec<CompressionMap>) -> Result<Self> {
        if let Some(i) = levels.windows(2).position(|w| w[0].coarse_count != w[1].fine_count()) {
            return Err(Error::invalid(format!(
                "level {} has {} coarse points but level {} expects {}",
                i,
                levels[i].coarse_count,
                i + 1,
                levels[i + 1].fine_count()
            )));
        }
        let base_count = levels.first().map(CompressionMap::fine_count);
        Ok(Self { levels, base_count })
    }

    pub fn push(&mut self, level: CompressionMap) -> Result<()> {
        let expected = self.coarse_count();
        if expected.is_some_and(|c| c != level.fine_count()) {
            return Err(Error::DimensionMismatch {
                expected: expected.unwrap_or_default(),
                got: level.fine_count(),
            });
        }
        if self.levels.is_empty() {
            self.base_count = Some(level.fine_count());
        }
        self.levels.push(level);
        Ok(())
    }

    pub fn levels(&self) -> &[CompressionMap] {
        &self.levels
    }

    pub fn fine_count(&self) -> Option<usize> {
        self.base_count
    }

    pub fn coarse_count(&self) -> Option<usize> {
        self.levels.last().map(CompressionMap::coarse_count).or(self.base_count)
    }

    /// Final coarse id of every original point.
    pub fn compose(&self) -> Vec<usize> {
        let Some(first) = self.levels.first() else {
            return (0..self.base_count.unwrap_or(0)).collect();
        };
        let mut out = first.assign.clone();
        for level in &self.levels[1..] {
            out.iter_mut().for_each(|c| *c = level.assign[*c]);
        }
        out
    }

    /// Gives every original point the label of its final coarse point.
    pub fn lift_labels(&self, coarse_labels: &[i64]) -> Result<Vec<i64>> {
        match self.coarse_count() {
            Some(expected) if expected != coarse_labels.len() => Err(Error::DimensionMismatch {
                expected,
                got: coarse_labels.len(),
            }),
            _ if self.levels.is_empty() => Ok(coarse_labels.to_vec()),
            _ => Ok(self.compose().into_iter().map(|c| coarse_labels[c]).collect()),
        }
    }

    /// One line per level, space-separated coarse ids.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for level in &self.levels {
            let line = level.assign.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut levels = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let assign = line
                .split_whitespace()
                .enumerate()
                .map(|(c, tok)| {
                    tok.parse::<usize>().map_err(|e| Error::Parse {
                        row: i + 1,
                        col: Some(c + 1),
                        msg: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            levels.push(CompressionMap::new(assign)?);
        }
        if levels.is_empty() {
            return Ok(Self {
                levels,
                base_count: None,
            });
        }
        Self::from_levels(levels)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AggregateOptions<'a> {
    pub sim_threshold: f64,
    /// Stop pairing once this many merges happened.
    pub max_merges: Option<usize>,
    /// Points with bitwise-identical features; such pairs score 1 even when
    /// the k-NN graph does not link them.
    pub duplicates: Option<&'a DuplicateIndex>,
}

/// Groups of exactly equal feature rows.
#[derive(Debug, Clone)]
pub struct DuplicateIndex {
    group_of: Vec<Option<usize>>,
    groups: Vec<Vec<usize>>,
}

impl DuplicateIndex {
    pub fn new(data: &DataSet) -> Self {
        let mut by_bits: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for (i, row) in data.rows().enumerate() {
            // +0.0 and -0.0 compare equal
            let key = row.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect();
            by_bits.entry(key).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = by_bits.into_values().filter(|g| g.len() > 1).collect();
        groups.sort_by_key(|g| g[0]);
        let mut group_of = vec![None; data.n()];
        for (gi, g) in groups.iter().enumerate() {
            g.iter().for_each(|&i| group_of[i] = Some(gi));
        }
        Self { group_of, groups }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Greedy pairwise matching on spectral similarity.
///
/// Vertices are visited by descending degree (ties by id). An unassigned
/// vertex claims its unassigned neighbor of highest similarity when that
/// similarity reaches `sim_threshold` (ties to the lower id); otherwise it
/// stays a singleton. Coarse ids follow creation order.
pub fn aggregate_once(graph: &Graph, emb: &Embedding, sim_threshold: f64) -> Result<CompressionMap> {
    aggregate_with(
        graph,
        emb,
        &AggregateOptions {
            sim_threshold,
            max_merges: None,
            duplicates: None,
        },
    )
}

pub fn aggregate_with(graph: &Graph, emb: &Embedding, opts: &AggregateOptions<'_>) -> Result<CompressionMap> {
    let n = graph.num_vertices();
    if emb.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: emb.n() });
    }
    if let Some(dups) = opts.duplicates {
        if dups.group_of.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: dups.group_of.len(),
            });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| graph.degree(b).cmp(&graph.degree(a)).then(a.cmp(&b)));

    const UNASSIGNED: usize = usize::MAX;
    let mut assign = vec![UNASSIGNED; n];
    let mut cursor = opts.duplicates.map(|d| vec![0usize; d.groups.len()]).unwrap_or_default();
    let budget = opts.max_merges.unwrap_or(usize::MAX);
    let mut merges = 0;
    let mut next = 0;

    for &u in &order {
        if assign[u] != UNASSIGNED {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |s: f64, v: usize| {
            let better = match best {
                None => true,
                Some((bs, bv)) => s > bs || (s == bs && v < bv),
            };
            if better {
                best = Some((s, v));
            }
        };
        if merges < budget {
            for &(v, _) in graph.neighbors(u) {
                if assign[v] == UNASSIGNED {
                    let s = spectral_similarity(emb, u, v);
                    if s >= opts.sim_threshold {
                        consider(s, v);
                    }
                }
            }
            if let Some(dups) = opts.duplicates {
                if let Some(g) = dups.group_of[u] {
                    let members = &dups.groups[g];
                    while cursor[g] < members.len() && assign[members[cursor[g]]] != UNASSIGNED {
                        cursor[g] += 1;
                    }
                    // the cursor may rest on `u` itself
                    if let Some(&v) = members[cursor[g]..].iter().find(|&&v| v != u && assign[v] == UNASSIGNED) {
                        consider(1.0, v);
                    }
                }
            }
        }
        assign[u] = next;
        if let Some((_, v)) = best {
            assign[v] = next;
            merges += 1;
        }
        next += 1;
    }
    Ok(CompressionMap {
        coarse_count: next,
        assign,
    })
}

/// Mean of the original feature rows in each subset.
pub fn build_pseudo_samples(data: &DataSet, map: &CompressionMap) -> Result<DataSet> {
    if map.fine_count() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: map.fine_count(),
        });
    }
    let d = data.d();
    let mut sums = vec![0.0; map.coarse_count * d];
    for (row, &c) in data.rows().zip(&map.assign) {
        sums[c * d..(c + 1) * d].iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    for (c, size) in map.subset_sizes().into_iter().enumerate() {
        sums[c * d..(c + 1) * d].iter_mut().for_each(|s| *s /= size as f64);
    }
    DataSet::new(map.coarse_count, d, sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionParams {
    pub k: usize,
    pub weighting: Weighting,
    pub embedding: EmbeddingConfig,
    pub threshold_start: f64,
    pub threshold_decay: f64,
    pub threshold_floor: f64,
    /// A level removing less than this fraction of points counts as stalled.
    pub stall_fraction: f64,
    pub max_levels: usize,
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self {
            k: 10,
            weighting: Weighting::Gaussian,
            embedding: EmbeddingConfig::default(),
            threshold_start: 0.9,
            threshold_decay: 0.9,
            threshold_floor: 0.3,
            stall_fraction: 0.05,
            max_levels: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub fine_count: usize,
    pub coarse_count: usize,
    pub sim_threshold: f64,
    pub backend: EmbeddingBackend,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub original_count: usize,
    pub final_count: usize,
    pub target_count: usize,
    pub achieved_ratio: f64,
    pub levels: Vec<LevelStats>,
    /// Set when the target count was not reached.
    pub target_missed: bool,
    pub graph_seconds: f64,
    pub embed_seconds: f64,
    pub aggregate_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Compressed {
    pub data: DataSet,
    pub map: CompositeMap,
    pub report: CompressionReport,
}

/// Compresses `data` until at most `n / target_ratio` pseudo-samples remain,
/// a level stalls at the threshold floor, or `max_levels` is exhausted.
pub fn compress(data: &DataSet, target_ratio: f64, params: &CompressionParams) -> Result<Compressed> {
    if !(target_ratio >= 1.0) || !target_ratio.is_finite() {
        return Err(Error::invalid(format!("compression ratio must be >= 1, got {target_ratio}")));
    }
    if params.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n0 = data.n();
    let target = ((n0 as f64 / target_ratio).floor() as usize).max(1);
    let original = data.clone().without_labels();
    let mut current = original.clone();
    let mut composed: Vec<usize> = (0..n0).collect();
    let mut map = CompositeMap::identity(n0);
    let mut report = CompressionReport {
        original_count: n0,
        target_count: target,
        ..Default::default()
    };
    let mut threshold = params.threshold_start;
    let mut level = 0;

    while current.n() > target {
        if level == params.max_levels {
            log::warn!("compression stopped after {level} levels at {} points (target {target})", current.n());
            report.target_missed = true;
            break;
        }
        let n = current.n();

        let t = Instant::now();
        let graph = build_knn_graph(&current, params.k.min(n - 1), params.weighting)?;
        report.graph_seconds += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let level_cfg = EmbeddingConfig {
            seed: params.embedding.seed.wrapping_add(level as u64),
            ..params.embedding
        };
        let (emb, backend) = embed_level(&graph, &level_cfg)?;
        report.embed_seconds += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let dups = DuplicateIndex::new(&current);
        let level_map = aggregate_with(
            &graph,
            &emb,
            &AggregateOptions {
                sim_threshold: threshold,
                max_merges: Some(n - target),
                duplicates: (!dups.is_empty()).then_some(&dups),
            },
        )?;
        let reduced = n - level_map.coarse_count();
        if reduced > 0 {
            // Means of means would weight subsets unevenly; average the
            // original rows instead.
            composed.iter_mut().for_each(|c| *c = level_map.assign()[*c]);
            current = build_pseudo_samples(&original, &CompressionMap::new(composed.clone())?)?;
            report.levels.push(LevelStats {
                fine_count: n,
                coarse_count: level_map.coarse_count(),
                sim_threshold: threshold,
                backend,
            });
            map.push(level_map)?;
        }
        report.aggregate_seconds += t.elapsed().as_secs_f64();
        level += 1;

        if current.n() <= target {
            break;
        }
        if (reduced as f64) < params.stall_fraction * n as f64 {
            if threshold <= params.threshold_floor {
                log::warn!("compression stalled at {} points (target {target})", current.n());
                report.target_missed = true;
                break;
            }
            threshold = (threshold * params.threshold_decay).max(params.threshold_floor);
        }
    }

    report.final_count = current.n();
    report.achieved_ratio = n0 as f64 / current.n() as f64;
    Ok(Compressed {
        data: current,
        map,
        report,
    })
}

/// Embeds one level with the configured backend, falling back to exact
/// eigenvectors when every smoothed vector degenerates (tiny or fragmented
/// graphs).
fn embed_level(graph: &Graph, cfg: &EmbeddingConfig) -> Result<(Embedding, EmbeddingBackend)> {
    let lap = laplacian(graph);
    if cfg.backend == EmbeddingBackend::Smoothed {
        match embed_smoothed(&lap, cfg.dim, cfg.sweeps, cfg.seed) {
            Ok(emb) => return Ok((emb, EmbeddingBackend::Smoothed)),
            Err(Error::Degenerate(msg)) => log::debug!("{msg}; falling back to eigenvectors"),
            Err(e) => return Err(e),
        }
    }
    let comps = laplacian_components(&lap);
    let nontrivial = lap.n() - comps.iter().max().map_or(0, |&c| c + 1);
    let dim = cfg.dim.min(nontrivial);
    if dim == 0 {
        // Only duplicate merging remains possible.
        let zeros = Embedding::from_rows_flat(lap.n(), 1, vec![0.0; lap.n()])?;
        return Ok((zeros, EmbeddingBackend::Eigen));
    }
    Ok((embed_eigenvectors(&lap, dim)?, EmbeddingBackend::Eigen))
}
