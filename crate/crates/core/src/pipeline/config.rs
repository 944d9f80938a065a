use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compression::CompressionParams;
use crate::embedding::{EmbeddingBackend, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::graph::Weighting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Complete-graph labeling of every point.
    OrigSvc,
    /// Labeling restricted to k-NN graph edges.
    Proximity,
    /// SEP search and SEP labeling on the full data.
    SepSvc,
    /// SEP-based SVC on compressed pseudo-samples, labels lifted back.
    CompressedSepSvc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::OrigSvc, Method::Proximity, Method::SepSvc, Method::CompressedSepSvc];

    pub fn name(&self) -> &'static str {
        match self {
            Method::OrigSvc => "orig_svc",
            Method::Proximity => "proximity",
            Method::SepSvc => "sep_svc",
            Method::CompressedSepSvc => "compressed_sep_svc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected orig_svc|proximity|sep_svc|compressed_sep_svc)")))
    }
}

/// Kernel width: a fixed value or the median-distance heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QSetting {
    Auto,
    Value(f64),
}

impl FromStr for QSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(QSetting::Auto);
        }
        let q = parse_num::<f64>("q", s)?;
        if !(q > 0.0) {
            return Err(Error::Config(format!("q must be positive or `auto`, got {s}")));
        }
        Ok(QSetting::Value(q))
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got {other:?}"))),
    }
}

fn parse_opt_auto(key: &str, value: &str) -> Result<Option<f64>> {
    if value.trim() == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

/// Every knob of a pipeline run. Keys accepted by [`PipelineConfig::set`]
/// are the long CLI flag names without the leading dashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub has_labels: bool,
    pub header: bool,
    pub standardize: bool,
    pub method: Method,
    pub ratio: f64,
    pub knn_k: usize,
    pub weighting: Weighting,
    pub embedding: EmbeddingBackend,
    pub embed_dim: usize,
    pub sweeps: usize,
    pub sim_threshold: f64,
    pub threshold_decay: f64,
    pub threshold_floor: f64,
    pub max_levels: usize,
    pub q: QSetting,
    #[serde(rename = "C")]
    pub c: f64,
    /// When set, `C = min(1, 1/(nu · n_train))` replaces the fixed `C`.
    pub nu: Option<f64>,
    pub train_tol: f64,
    pub max_passes: usize,
    pub segment_samples: usize,
    pub assign_outliers: bool,
    /// `None` means `1/(4q)`.
    pub step0: Option<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub shrink: f64,
    /// `None` means `1e-2/sqrt(q)`.
    pub merge_eps: Option<f64>,
    pub seed_embed: u64,
    pub seed_subsample: u64,
    /// `orig_svc` refuses inputs larger than this.
    pub orig_svc_limit: usize,
    pub labels_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
    pub map_out: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub seps_out: Option<PathBuf>,
    pub embedding_out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let compression = CompressionParams::default();
        let embedding = EmbeddingConfig::default();
        Self {
            input: None,
            has_labels: false,
            header: false,
            standardize: true,
            method: Method::CompressedSepSvc,
            ratio: 1.0,
            knn_k: compression.k,
            weighting: compression.weighting,
            embedding: embedding.backend,
            embed_dim: embedding.dim,
            sweeps: embedding.sweeps,
            sim_threshold: compression.threshold_start,
            threshold_decay: compression.threshold_decay,
            threshold_floor: compression.threshold_floor,
            max_levels: compression.max_levels,
            q: QSetting::Auto,
            c: 1.0,
            nu: None,
            train_tol: 1e-4,
            max_passes: 200,
            segment_samples: 15,
            assign_outliers: false,
            step0: None,
            max_iters: 500,
            grad_tol: 1e-6,
            shrink: 0.5,
            merge_eps: None,
            seed_embed: 0,
            seed_subsample: 0,
            orig_svc_limit: 20_000,
            labels_out: None,
            report_out: None,
            map_out: None,
            model_out: None,
            seps_out: None,
            embedding_out: None,
        }
    }
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "input",
        "labels",
        "header",
        "standardize",
        "method",
        "ratio",
        "knn-k",
        "weighting",
        "embedding",
        "embed-dim",
        "sweeps",
        "sim-threshold",
        "threshold-decay",
        "threshold-floor",
        "max-levels",
        "q",
        "C",
        "nu",
        "train-tol",
        "max-passes",
        "segment-samples",
        "assign-outliers",
        "step0",
        "max-iters",
        "grad-tol",
        "shrink",
        "merge-eps",
        "seed-embed",
        "seed-subsample",
        "orig-svc-limit",
        "labels-out",
        "report-out",
        "map-out",
        "model-out",
        "seps-out",
        "embedding-out",
    ];

    /// Sets one field from its flag name and textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || Some(PathBuf::from(v));
        match key {
            "input" => self.input = path(),
            "labels" => self.has_labels = parse_bool(key, v)?,
            "header" => self.header = parse_bool(key, v)?,
            "standardize" => self.standardize = parse_bool(key, v)?,
            "method" => self.method = v.parse()?,
            "ratio" => self.ratio = parse_num(key, v)?,
            "knn-k" => self.knn_k = parse_num(key, v)?,
            "weighting" => self.weighting = v.parse()?,
            "embedding" => self.embedding = v.parse()?,
            "embed-dim" => self.embed_dim = parse_num(key, v)?,
            "sweeps" => self.sweeps = parse_num(key, v)?,
            "sim-threshold" => self.sim_threshold = parse_num(key, v)?,
            "threshold-decay" => self.threshold_decay = parse_num(key, v)?,
            "threshold-floor" => self.threshold_floor = parse_num(key, v)?,
            "max-levels" => self.max_levels = parse_num(key, v)?,
            "q" => self.q = v.parse()?,
            "C" => self.c = parse_num(key, v)?,
            "nu" => self.nu = if v == "none" { None } else { Some(parse_num(key, v)?) },
            "train-tol" => self.train_tol = parse_num(key, v)?,
            "max-passes" => self.max_passes = parse_num(key, v)?,
            "segment-samples" => self.segment_samples = parse_num(key, v)?,
            "assign-outliers" => self.assign_outliers = parse_bool(key, v)?,
            "step0" => self.step0 = parse_opt_auto(key, v)?,
            "max-iters" => self.max_iters = parse_num(key, v)?,
            "grad-tol" => self.grad_tol = parse_num(key, v)?,
            "shrink" => self.shrink = parse_num(key, v)?,
            "merge-eps" => self.merge_eps = parse_opt_auto(key, v)?,
            "seed-embed" => self.seed_embed = parse_num(key, v)?,
            "seed-subsample" => self.seed_subsample = parse_num(key, v)?,
            "orig-svc-limit" => self.orig_svc_limit = parse_num(key, v)?,
            "labels-out" => self.labels_out = path(),
            "report-out" => self.report_out = path(),
            "map-out" => self.map_out = path(),
            "model-out" => self.model_out = path(),
            "seps-out" => self.seps_out = path(),
            "embedding-out" => self.embedding_out = path(),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.ratio >= 1.0) || !self.ratio.is_finite() {
            return bad(format!("ratio must be >= 1, got {}", self.ratio));
        }
        if self.knn_k == 0 {
            return bad("knn-k must be at least 1".into());
        }
        if self.embed_dim == 0 || self.sweeps == 0 {
            return bad("embed-dim and sweeps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.sim_threshold) || !(0.0..=1.0).contains(&self.threshold_floor) {
            return bad("similarity thresholds must lie in [0, 1]".into());
        }
        if !(self.threshold_decay > 0.0 && self.threshold_decay < 1.0) {
            return bad(format!("threshold-decay must lie in (0, 1), got {}", self.threshold_decay));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return bad(format!("C must lie in (0, 1], got {}", self.c));
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0 && nu <= 1.0) {
                return bad(format!("nu must lie in (0, 1], got {nu}"));
            }
        }
        if !(self.train_tol > 0.0) || self.max_passes == 0 {
            return bad("train-tol must be positive and max-passes at least 1".into());
        }
        if self.segment_samples == 0 {
            return bad("segment-samples must be at least 1".into());
        }
        if self.step0.is_some_and(|s| !(s > 0.0)) || !(self.grad_tol > 0.0) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("descent options: step0 > 0, grad-tol > 0 and 0 < shrink < 1 required".into());
        }
        if self.merge_eps.is_some_and(|e| !(e > 0.0)) {
            return bad("merge-eps must be positive".into());
        }
        Ok(())
    }

    pub fn compression_params(&self) -> CompressionParams {
        CompressionParams {
            k: self.knn_k,
            weighting: self.weighting,
            embedding: EmbeddingConfig {
                backend: self.embedding,
                dim: self.embed_dim,
                sweeps: self.sweeps,
                seed: self.seed_embed,
            },
            threshold_start: self.sim_threshold,
            threshold_decay: self.threshold_decay,
            threshold_floor: self.threshold_floor,
            max_levels: self.max_levels,
            ..CompressionParams::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("input", "x.csv"),
            ("labels", "true"),
            ("header", "false"),
            ("standardize", "off"),
            ("method", "sep_svc"),
            ("ratio", "5"),
            ("knn-k", "7"),
            ("weighting", "unit"),
            ("embedding", "eigen"),
            ("embed-dim", "4"),
            ("sweeps", "3"),
            ("sim-threshold", "0.8"),
            ("threshold-decay", "0.5"),
            ("threshold-floor", "0.2"),
            ("max-levels", "9"),
            ("q", "auto"),
            ("C", "0.5"),
            ("nu", "0.1"),
            ("train-tol", "1e-6"),
            ("max-passes", "10"),
            ("segment-samples", "20"),
            ("assign-outliers", "yes"),
            ("step0", "auto"),
            ("max-iters", "100"),
            ("grad-tol", "1e-5"),
            ("shrink", "0.25"),
            ("merge-eps", "0.01"),
            ("seed-embed", "3"),
            ("seed-subsample", "4"),
            ("orig-svc-limit", "10"),
            ("labels-out", "l.txt"),
            ("report-out", "r.json"),
            ("map-out", "m.txt"),
            ("model-out", "model.json"),
            ("seps-out", "seps.csv"),
            ("embedding-out", "emb.csv"),
        ];
        assert_eq!(samples.len(), PipelineConfig::KEYS.len());
        let mut cfg = PipelineConfig::default();
        for (k, v) in samples {
            assert!(PipelineConfig::KEYS.contains(&k));
            cfg.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert_eq!(cfg.method, Method::SepSvc);
        assert_eq!(cfg.knn_k, 7);
        assert_eq!(cfg.merge_eps, Some(0.01));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("bogus", "1").unwrap_err().is_config_error());
        assert!(cfg.set("method", "kmeans").is_err());
        assert!(cfg.set("q", "-1").is_err());
        assert!(cfg.set("ratio", "two").is_err());
    }

    #[test]
    fn validation_catches_ranges() {
        let cfg = PipelineConfig {
            ratio: 0.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            c: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_file_with_comments() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# experiment\nmethod = proximity\n\nknn-k=12  # denser\nq = 0.5").unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.apply_file(f.path()).unwrap();
        assert_eq!(cfg.method, Method::Proximity);
        assert_eq!(cfg.knn_k, 12);
        assert_eq!(cfg.q, QSetting::Value(0.5));
    }

    #[test]
    fn config_file_errors_carry_line_numbers() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "ratio = 2\nnonsense").unwrap();
        let err = PipelineConfig::default().apply_file(f.path()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
