//! End-to-end runs: load, optionally compress, train, label, lift, report.

mod config;
mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::compression::{compress, CompositeMap};
use crate::data::{load_dense_matrix, standardize, DataSet};
use crate::embedding::{embed_eigenvectors, embed_smoothed, EmbeddingBackend};
use crate::error::{Error, Result, StageContext};
use crate::graph::{build_knn_graph, laplacian};
use crate::labeling::{label_complete_graph, label_proximity_graph, AdjacencyParams, OutlierPolicy, OUTLIER};
use crate::metrics::nmi;
use crate::sep::{default_merge_eps, find_seps, label_seps, DescentOptions};
use crate::svdd::{suggest_q, train, KernelParams, PointRole, TrainOptions};

pub use config::{Method, PipelineConfig, QSetting};
pub use report::{read_labels, write_labels, CompressionSummary, RunReport, StageTimings, SCHEMA_VERSION};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub labels: Vec<i64>,
    pub report: RunReport,
}

/// Removes every file it recorded unless [`OutputGuard::commit`] is called.
#[derive(Default)]
struct OutputGuard {
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn record(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Loads the configured input file and runs [`run_on_data`].
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let start = Instant::now();
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let data = load_dense_matrix(input, config.has_labels, config.header).stage("load")?;
    execute(config, &data, start)
}

/// Runs the configured method on in-memory data. Output paths in `config`
/// are honored; on failure every file written so far is removed.
pub fn run_on_data(config: &PipelineConfig, data: &DataSet) -> Result<RunOutput> {
    config.validate()?;
    execute(config, data, Instant::now())
}

fn execute(config: &PipelineConfig, raw: &DataSet, start: Instant) -> Result<RunOutput> {
    let mut timings = StageTimings::default();
    let mut warnings = Vec::new();
    let mut guard = OutputGuard::default();

    let data = if config.standardize {
        standardize(raw).stage("load")?
    } else {
        raw.clone()
    };
    timings.load = start.elapsed().as_secs_f64();

    if config.method == Method::OrigSvc && data.n() > config.orig_svc_limit {
        return Err(Error::Config(format!(
            "orig_svc is limited to {} points, input has {}",
            config.orig_svc_limit,
            data.n()
        )));
    }

    if let Some(path) = &config.embedding_out {
        dump_embedding(config, &data, path, &mut timings).stage("embed")?;
        guard.record(path);
    }

    let mut compression = None;
    let mut lift_map: Option<CompositeMap> = None;
    let train_data = if config.method == Method::CompressedSepSvc {
        let c = compress(&data, config.ratio, &config.compression_params()).stage("compress")?;
        timings.graph += c.report.graph_seconds;
        timings.embed += c.report.embed_seconds;
        timings.compress += c.report.aggregate_seconds;
        if c.report.target_missed {
            warnings.push(format!(
                "compression reached {} points, short of the target {}",
                c.report.final_count, c.report.target_count
            ));
        }
        compression = Some(CompressionSummary::from(&c.report));
        lift_map = Some(c.map);
        c.data
    } else {
        data.clone().without_labels()
    };
    if let (Some(path), Some(map)) = (&config.map_out, &lift_map) {
        map.write(path).stage("compress")?;
        guard.record(path);
    } else if config.map_out.is_some() {
        warnings.push(format!("map-out ignored: {} does not compress", config.method));
    }

    let t = Instant::now();
    let q = match config.q {
        QSetting::Value(q) => q,
        QSetting::Auto => suggest_q(&data, config.seed_subsample).stage("train")?,
    };
    let n_train = train_data.n();
    let c = match config.nu {
        Some(nu) => (1.0 / (nu * n_train as f64)).min(1.0),
        None => config.c,
    };
    let params = KernelParams::new(q, c).stage("train")?;
    let opts = TrainOptions {
        tol: config.train_tol,
        max_passes: config.max_passes,
    };
    let model = train(&train_data, params, &opts).stage("train")?;
    timings.train = t.elapsed().as_secs_f64();
    if !model.converged() {
        warnings.push(format!(
            "SVDD stopped after {} iterations with KKT violation {:.3e} (tol {:.1e})",
            model.iterations(),
            model.kkt_violation(),
            model.tol()
        ));
    }
    if let Some(path) = &config.model_out {
        model.save_json(path).stage("train")?;
        guard.record(path);
    }

    let adj = AdjacencyParams::for_model(&model, config.segment_samples).stage("label")?;
    let policy = if config.assign_outliers {
        OutlierPolicy::AssignNearest
    } else {
        OutlierPolicy::Mark
    };
    let mut sep_count = None;
    let mut non_converged = None;
    let train_labels = match config.method {
        Method::OrigSvc => {
            let t = Instant::now();
            let labels = label_complete_graph(&model, &train_data, &adj, policy).stage("label")?;
            timings.label = t.elapsed().as_secs_f64();
            labels
        }
        Method::Proximity => {
            let t = Instant::now();
            let k = config.knn_k.min(n_train.saturating_sub(1)).max(1);
            let graph = build_knn_graph(&train_data, k, config.weighting).stage("graph")?;
            timings.graph += t.elapsed().as_secs_f64();
            let t = Instant::now();
            let labels = label_proximity_graph(&model, &train_data, &graph, &adj, policy).stage("label")?;
            timings.label = t.elapsed().as_secs_f64();
            labels
        }
        Method::SepSvc | Method::CompressedSepSvc => {
            let t = Instant::now();
            let descent = DescentOptions {
                step0: config.step0.unwrap_or(1.0 / (4.0 * q)),
                max_iters: config.max_iters,
                grad_tol: config.grad_tol,
                shrink: config.shrink,
            };
            let eps = config.merge_eps.unwrap_or_else(|| default_merge_eps(q));
            let seps = find_seps(&model, &train_data, &descent, eps).stage("sep")?;
            timings.sep = t.elapsed().as_secs_f64();
            sep_count = Some(seps.len());
            non_converged = Some(seps.non_converged);
            if seps.non_converged > 0 {
                warnings.push(format!("{} of {n_train} descents hit the iteration cap", seps.non_converged));
            }
            if let Some(path) = &config.seps_out {
                let assign_path = assignment_path(path);
                seps.write(path, &assign_path).stage("sep")?;
                guard.record(path);
                guard.record(&assign_path);
            }
            let t = Instant::now();
            let clustering = label_seps(&model, seps, &adj).stage("label")?;
            timings.label = t.elapsed().as_secs_f64();
            clustering.labels
        }
    };
    if config.seps_out.is_some() && sep_count.is_none() {
        warnings.push(format!("seps-out ignored: {} finds no SEPs", config.method));
    }

    let labels = match &lift_map {
        Some(map) => {
            let t = Instant::now();
            let lifted = map.lift_labels(&train_labels).stage("lift")?;
            timings.lift = t.elapsed().as_secs_f64();
            lifted
        }
        None => train_labels,
    };

    let outlier_count = labels.iter().filter(|&&l| l == OUTLIER).count();
    let cluster_count = {
        let mut distinct: Vec<i64> = labels.iter().copied().filter(|&l| l != OUTLIER).collect();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.len()
    };
    let score = match raw.truth_labels() {
        Some(truth) => Some(nmi(&labels, truth).stage("label")?),
        None => None,
    };

    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        method: config.method.name().to_string(),
        n_points: data.n(),
        n_features: data.d(),
        n_train,
        achieved_ratio: data.n() as f64 / n_train as f64,
        cluster_count,
        outlier_count,
        nmi: score,
        q,
        c,
        r_squared: model.r_squared(),
        support_vectors: model.indices_with_role(PointRole::SupportVector).len(),
        bounded_support_vectors: model.indices_with_role(PointRole::BoundedSupportVector).len(),
        svdd_converged: model.converged(),
        svdd_iterations: model.iterations(),
        sep_count,
        non_converged_descents: non_converged,
        compression,
        warnings,
        config: config.clone(),
        timings,
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }

    if let Some(path) = &config.labels_out {
        guard.record(path);
        write_labels(path, &labels).stage("write")?;
    }
    report.timings.total = start.elapsed().as_secs_f64();
    if let Some(path) = &config.report_out {
        guard.record(path);
        report.write(path).stage("write")?;
    }
    guard.commit();
    Ok(RunOutput { labels, report })
}

/// Companion file of `--seps-out` holding each point's SEP index.
pub fn assignment_path(seps_path: &Path) -> PathBuf {
    let mut s = seps_path.as_os_str().to_os_string();
    s.push(".assignment");
    PathBuf::from(s)
}

fn dump_embedding(config: &PipelineConfig, data: &DataSet, path: &Path, timings: &mut StageTimings) -> Result<()> {
    let t = Instant::now();
    let k = config.knn_k.min(data.n().saturating_sub(1)).max(1);
    let graph = build_knn_graph(data, k, config.weighting)?;
    timings.graph += t.elapsed().as_secs_f64();
    let t = Instant::now();
    let lap = laplacian(&graph);
    let emb = match config.embedding {
        EmbeddingBackend::Smoothed => embed_smoothed(&lap, config.embed_dim, config.sweeps, config.seed_embed)?,
        EmbeddingBackend::Eigen => embed_eigenvectors(&lap, config.embed_dim)?,
    };
    emb.write_csv(path)?;
    timings.embed += t.elapsed().as_secs_f64();
    Ok(())
}

/// Writes the k-NN graph of the (optionally standardized) input as an edge
/// list.
pub fn export_graph(config: &PipelineConfig, out: &Path) -> Result<usize> {
    config.validate()?;
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let raw = load_dense_matrix(input, config.has_labels, config.header).stage("load")?;
    let data = if config.standardize {
        standardize(&raw).stage("load")?
    } else {
        raw
    };
    let k = config.knn_k.min(data.n().saturating_sub(1)).max(1);
    let graph = build_knn_graph(&data, k, config.weighting).stage("graph")?;
    graph.write_edge_list(out).stage("graph")?;
    Ok(graph.edges().len())
}

/// Lifts pseudo-sample labels back to the original points through a saved
/// composite map.
pub fn lift_label_file(map_path: &Path, labels_path: &Path, out: &Path) -> Result<usize> {
    let map = CompositeMap::read(map_path).stage("lift")?;
    let coarse = read_labels(labels_path).stage("lift")?;
    let fine = map.lift_labels(&coarse).stage("lift")?;
    if let Err(e) = write_labels(out, &fine) {
        let _ = std::fs::remove_file(out);
        return Err(e).stage("lift");
    }
    Ok(fine.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub achieved_ratio: Option<f64>,
    pub nmi: Option<f64>,
    pub timings: StageTimings,
    pub error: Option<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Quotes a CSV field when it contains separators or quotes.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "ratio,achieved_ratio,nmi,total_seconds,graph_seconds,embed_seconds,compress_seconds,train_seconds,sep_seconds,label_seconds,lift_seconds,error\n",
    );
    for r in rows {
        let t = &r.timings;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.ratio,
            fmt_opt(r.achieved_ratio),
            fmt_opt(r.nmi),
            t.total,
            t.graph,
            t.embed,
            t.compress,
            t.train,
            t.sep,
            t.label,
            t.lift,
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}

fn strip_outputs(config: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        labels_out: None,
        report_out: None,
        map_out: None,
        model_out: None,
        seps_out: None,
        embedding_out: None,
        ..config.clone()
    }
}

/// Runs `compressed_sep_svc` once per ratio on data loaded once. A failing
/// ratio yields a row carrying the error; the sweep goes on.
pub fn sweep_compression(config: &PipelineConfig, ratios: &[f64]) -> Result<Vec<SweepRow>> {
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let data = load_dense_matrix(input, config.has_labels, config.header).stage("load")?;
    sweep_on_data(config, &data, ratios)
}

pub fn sweep_on_data(config: &PipelineConfig, data: &DataSet, ratios: &[f64]) -> Result<Vec<SweepRow>> {
    if ratios.is_empty() {
        return Err(Error::Config("no ratios given".into()));
    }
    let base = PipelineConfig {
        method: Method::CompressedSepSvc,
        ..strip_outputs(config)
    };
    Ok(ratios
        .iter()
        .map(|&ratio| {
            let cfg = PipelineConfig { ratio, ..base.clone() };
            match run_on_data(&cfg, data) {
                Ok(out) => SweepRow {
                    ratio,
                    achieved_ratio: Some(out.report.achieved_ratio),
                    nmi: out.report.nmi,
                    timings: out.report.timings,
                    error: None,
                },
                Err(e) => SweepRow {
                    ratio,
                    achieved_ratio: None,
                    nmi: None,
                    timings: StageTimings::default(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub nmi: Option<f64>,
    pub seconds: Option<f64>,
    pub cluster_count: Option<usize>,
    pub error: Option<String>,
}

pub fn compare_methods(config: &PipelineConfig, methods: &[Method]) -> Result<Vec<CompareRow>> {
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let data = load_dense_matrix(input, config.has_labels, config.header).stage("load")?;
    Ok(compare_on_data(config, &data, methods))
}

/// One run per method with otherwise identical settings. Failures, including
/// the `orig_svc` size guard, are reported per row.
pub fn compare_on_data(config: &PipelineConfig, data: &DataSet, methods: &[Method]) -> Vec<CompareRow> {
    let base = strip_outputs(config);
    methods
        .iter()
        .map(|&method| {
            let cfg = PipelineConfig { method, ..base.clone() };
            match run_on_data(&cfg, data) {
                Ok(out) => CompareRow {
                    method,
                    nmi: out.report.nmi,
                    seconds: Some(out.report.timings.total),
                    cluster_count: Some(out.report.cluster_count),
                    error: None,
                },
                Err(e) => CompareRow {
                    method,
                    nmi: None,
                    seconds: None,
                    cluster_count: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("method,nmi,seconds,clusters,error\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            fmt_opt(r.nmi),
            fmt_opt(r.seconds),
            r.cluster_count.map(|c| c.to_string()).unwrap_or_default(),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}

/// Fixed-width table for terminals.
pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out = format!("{:<20} {:>8} {:>10} {:>9}\n", "method", "NMI", "seconds", "clusters");
    for r in rows {
        match &r.error {
            Some(e) => {
                let _ = writeln!(out, "{:<20} error: {e}", r.method.name());
            }
            None => {
                let _ = writeln!(
                    out,
                    "{:<20} {:>8} {:>10.3} {:>9}",
                    r.method.name(),
                    r.nmi.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                    r.seconds.unwrap_or(0.0),
                    r.cluster_count.unwrap_or(0)
                );
            }
        }
    }
    out
}
