use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use markermap_core::eval::{ClassificationMetrics, ReconRow};
use markermap_core::experiment::{BenchRow, BenchSummary, NoiseRow};
use markermap_core::model::{LrProbe, TrainReport};
use markermap_core::Dataset;
use serde::Serialize;

use crate::config::Resolved;
use crate::failure::Failure;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct DataSummary {
    pub source: String,
    pub cells: usize,
    pub genes: usize,
    pub labeled: bool,
    pub class_names: Vec<String>,
}

impl DataSummary {
    pub fn of(ds: &Dataset, source: String) -> Self {
        Self {
            source,
            cells: ds.n_cells(),
            genes: ds.n_genes(),
            labeled: ds.labels.is_some(),
            class_names: ds.class_names.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MarkerEntry {
    pub index: usize,
    pub name: String,
    pub score: Option<f64>,
}

/// Training history without wall-clock fields.
#[derive(Debug, Serialize)]
pub struct Training {
    pub learning_rate: f64,
    pub lr_probes: Vec<LrProbe>,
    pub stop_epoch: usize,
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub temperatures: Vec<f64>,
}

impl From<&TrainReport> for Training {
    fn from(r: &TrainReport) -> Self {
        Self {
            learning_rate: r.learning_rate,
            lr_probes: r.lr_probes.clone(),
            stop_epoch: r.stop_epoch,
            train_losses: r.train_losses.clone(),
            validation_losses: r.validation_losses.clone(),
            temperatures: r.temperatures.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BenchmarkSection {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<BenchSummary>,
}

#[derive(Debug, Serialize)]
pub struct NoiseSection {
    pub rows: Vec<NoiseRow>,
}

#[derive(Debug, Serialize)]
pub struct ReconSection {
    pub table: Vec<ReconRow>,
    pub mean_variance_original: f64,
    pub mean_variance_reconstructed: f64,
    pub pca_eigenvalues: [f64; 2],
}

#[derive(Debug, Serialize)]
pub struct SynthSection {
    pub planted: Vec<usize>,
    pub planted_names: Vec<String>,
    /// Planted genes among the selected markers, when markers were selected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered: Option<usize>,
}

#[derive(Debug, Default, Serialize)]
pub struct Timing {
    pub total_secs: f64,
    pub fit_secs: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub format_version: u32,
    pub command: &'a str,
    pub config: &'a Resolved,
    pub data: DataSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markers: Option<Vec<MarkerEntry>>,
    /// Test-split metrics keyed by classifier (`knn`, `model`).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub classifiers: BTreeMap<&'static str, ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<Training>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<ReconSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
    /// Files written next to the report, relative to the output directory.
    pub outputs: Vec<String>,
    pub timing: Timing,
}

impl<'a> Report<'a> {
    pub fn new(config: &'a Resolved, data: DataSummary) -> Self {
        Self {
            format_version: REPORT_VERSION,
            command: &config.command,
            config,
            data,
            markers: None,
            classifiers: BTreeMap::new(),
            training: None,
            benchmark: None,
            noise: None,
            reconstruction: None,
            synth: None,
            outputs: Vec::new(),
            timing: Timing::default(),
        }
    }
}

/// Writes files into the output directory and remembers their names.
pub struct Outputs {
    dir: PathBuf,
    pub written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<(), Failure> {
        let path = self.path(name);
        std::fs::write(&path, content).map_err(|e| Failure::io(&path, e))
    }

    pub fn lines(&mut self, name: &str, lines: &[String]) -> Result<(), Failure> {
        let mut body = lines.join("\n");
        body.push('\n');
        self.text(name, &body)
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), Failure> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Failure::io(&path, e))
    }

    pub fn confusion(
        &mut self,
        name: &str,
        metrics: &ClassificationMetrics,
        class_names: &[String],
    ) -> Result<(), Failure> {
        let mut header = vec!["truth"];
        header.extend(class_names.iter().map(String::as_str));
        let rows = metrics
            .confusion
            .counts
            .iter()
            .enumerate()
            .map(|(c, counts)| {
                let mut row = vec![class_names[c].clone()];
                row.extend(counts.iter().map(usize::to_string));
                row
            });
        self.csv(name, &header, rows)
    }

    /// The report goes last; its presence means the run succeeded.
    pub fn report(mut self, mut report: Report<'_>) -> Result<(), Failure> {
        report.outputs = std::mem::take(&mut self.written);
        report.outputs.push("report.json".into());
        let mut body = serde_json::to_string_pretty(&report)?;
        body.push('\n');
        let path = self.dir.join("report.json");
        std::fs::write(&path, body).map_err(|e| Failure::io(&path, e))
    }
}

pub fn join_indices(idx: &[usize]) -> String {
    idx.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
