use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compression::{CompressionReport, LevelStats};
use crate::error::{Error, Result};

use super::config::PipelineConfig;

/// Bumped whenever a field of [`RunReport`] changes meaning or is removed.
pub const SCHEMA_VERSION: u32 = 1;

/// Wall-clock seconds per stage. Stages a method does not run stay at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub graph: f64,
    pub embed: f64,
    pub compress: f64,
    pub train: f64,
    pub sep: f64,
    pub label: f64,
    pub lift: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.load + self.graph + self.embed + self.compress + self.train + self.sep + self.label + self.lift
    }
}

/// The timing-free part of a [`CompressionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionSummary {
    pub original_count: usize,
    pub final_count: usize,
    pub target_count: usize,
    pub achieved_ratio: f64,
    pub target_missed: bool,
    pub levels: Vec<LevelStats>,
}

impl From<&CompressionReport> for CompressionSummary {
    fn from(r: &CompressionReport) -> Self {
        Self {
            original_count: r.original_count,
            final_count: r.final_count,
            target_count: r.target_count,
            achieved_ratio: r.achieved_ratio,
            target_missed: r.target_missed,
            levels: r.levels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub method: String,
    pub n_points: usize,
    pub n_features: usize,
    /// Points the SVDD was trained on (pseudo-samples when compressed).
    pub n_train: usize,
    pub achieved_ratio: f64,
    pub cluster_count: usize,
    pub outlier_count: usize,
    pub nmi: Option<f64>,
    pub q: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub r_squared: f64,
    pub support_vectors: usize,
    pub bounded_support_vectors: usize,
    pub svdd_converged: bool,
    pub svdd_iterations: usize,
    pub sep_count: Option<usize>,
    pub non_converged_descents: Option<usize>,
    pub compression: Option<CompressionSummary>,
    pub warnings: Vec<String>,
    pub config: PipelineConfig,
    pub timings: StageTimings,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("cannot serialize report: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            col: Some(e.column()),
            msg: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// One label per line.
pub fn write_labels(path: &Path, labels: &[i64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse().map_err(|_| Error::Parse {
            row: i + 1,
            col: None,
            msg: format!("not an integer label: {line:?}"),
        })?);
    }
    Ok(labels)
}
