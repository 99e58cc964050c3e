//! End-to-end protocols: preprocess, split, select markers, then score the
//! panel on the held-out test split.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inject_label_noise, preprocess, split, Dataset, PreprocessMode, SplitIndices};
use crate::error::{Error, Result};
use crate::eval::{
    self, classification_metrics, knn_on_markers, ClassificationMetrics, Pca, ReconReport,
};
use crate::model::{random_markers, MarkerModel, Method, TrainConfig, TrainReport};
use crate::rng::{stream, Rng};
use crate::tensor::Matrix;

/// A marker-selection strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Approach {
    Model(Method),
    Random,
}

impl Approach {
    pub const ALL: [Approach; 6] = [
        Approach::Model(Method::Supervised),
        Approach::Model(Method::Unsupervised),
        Approach::Model(Method::Joint),
        Approach::Model(Method::ConcreteVae),
        Approach::Model(Method::GlobalGumbel),
        Approach::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Model(Method::Supervised) => "markermap-supervised",
            Approach::Model(Method::Unsupervised) => "markermap-unsupervised",
            Approach::Model(Method::Joint) => "markermap-joint",
            Approach::Model(Method::ConcreteVae) => "concrete-vae",
            Approach::Model(Method::GlobalGumbel) => "global-gumbel",
            Approach::Random => "random",
        }
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let plain = match s {
            "supervised" | "unsupervised" | "joint" => Some(format!("markermap-{s}")),
            _ => None,
        };
        let s = plain.as_deref().unwrap_or(s);
        Approach::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Approach> for String {
    fn from(a: Approach) -> String {
        a.name().to_string()
    }
}

impl TryFrom<String> for Approach {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Data handling shared by all protocols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Protocol {
    pub log_transform: bool,
    pub stratified: bool,
    pub knn_neighbors: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            log_transform: true,
            stratified: true,
            knn_neighbors: eval::DEFAULT_NEIGHBORS,
        }
    }
}

/// A preprocessed dataset and its split for one seed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub data: Dataset,
    pub split: SplitIndices,
}

impl Prepared {
    pub fn new(
        raw: &Dataset,
        mode: PreprocessMode,
        protocol: &Protocol,
        seed: u64,
    ) -> Result<Self> {
        let data = preprocess(raw, mode, protocol.log_transform)?;
        Self::from_preprocessed(data, protocol, seed)
    }

    pub fn from_preprocessed(data: Dataset, protocol: &Protocol, seed: u64) -> Result<Self> {
        let split = split(
            data.n_cells(),
            data.labels.as_deref(),
            seed,
            protocol.stratified,
        )?;
        Ok(Self { data, split })
    }

    fn rows(&self, idx: &[usize]) -> Matrix {
        self.data.x.select_rows(idx)
    }

    fn labels_at(labels: Option<&[usize]>, idx: &[usize]) -> Option<Vec<usize>> {
        labels.map(|l| idx.iter().map(|&i| l[i]).collect())
    }
}

/// Markers chosen by one approach, with the fitted model when there is one.
#[derive(Clone, Debug)]
pub struct Selection {
    pub approach: Approach,
    pub markers: Vec<usize>,
    /// Importance score of each marker, where the approach has one.
    pub scores: Option<Vec<f64>>,
    pub model: Option<MarkerModel>,
    pub train_report: Option<TrainReport>,
}

/// Fit `approach` on the train split (early stopping on validation) using
/// `labels` for any classification objective.
pub fn select_markers(
    prep: &Prepared,
    labels: Option<&[usize]>,
    approach: Approach,
    config: &TrainConfig,
) -> Result<Selection> {
    let d = prep.data.n_genes();
    match approach {
        Approach::Random => Ok(Selection {
            approach,
            markers: random_markers(d, config.k, config.seed)?,
            scores: None,
            model: None,
            train_report: None,
        }),
        Approach::Model(method) => {
            let classes = if labels.is_some() {
                prep.data.n_classes()
            } else {
                0
            };
            let mut model = MarkerModel::new(method, d, classes, config)?;
            let xt = prep.rows(&prep.split.train);
            let xv = prep.rows(&prep.split.validation);
            let yt = Prepared::labels_at(labels, &prep.split.train);
            let yv = Prepared::labels_at(labels, &prep.split.validation);
            let report = model.fit((&xt, yt.as_deref()), (&xv, yv.as_deref()))?;
            let all_scores = model.selector.scores();
            let markers = model.markers();
            let scores = markers.iter().map(|&j| all_scores[j]).collect();
            Ok(Selection {
                approach,
                markers,
                scores: Some(scores),
                model: Some(model),
                train_report: Some(report),
            })
        }
    }
}

/// k-NN on the marker columns, trained on the train split with
/// `train_labels` and scored against the dataset's own test labels.
pub fn knn_test_metrics(
    prep: &Prepared,
    markers: &[usize],
    train_labels: &[usize],
    neighbors: usize,
) -> Result<(Vec<usize>, ClassificationMetrics)> {
    let truth = prep.data.labels()?;
    let yt: Vec<usize> = prep.split.train.iter().map(|&i| train_labels[i]).collect();
    let test_truth: Vec<usize> = prep.split.test.iter().map(|&i| truth[i]).collect();
    let pred = knn_on_markers(
        &prep.rows(&prep.split.train),
        &yt,
        &prep.rows(&prep.split.test),
        markers,
        neighbors,
    )?;
    let metrics = classification_metrics(&test_truth, &pred, prep.data.n_classes())?;
    Ok((pred, metrics))
}

#[derive(Clone, Debug)]
pub struct SelectOutcome {
    pub selection: Selection,
    /// k-NN on the markers; present when the dataset has labels.
    pub metrics: Option<ClassificationMetrics>,
    pub test_predictions: Option<Vec<usize>>,
    /// The model's own classifier on the full test rows, for methods that
    /// train one.
    pub model_metrics: Option<ClassificationMetrics>,
}

/// Classification-mode preprocessing, split, fit and k-NN evaluation.
pub fn run_select(
    raw: &Dataset,
    approach: Approach,
    config: &TrainConfig,
    protocol: &Protocol,
) -> Result<SelectOutcome> {
    let prep = Prepared::new(raw, PreprocessMode::Classification, protocol, config.seed)?;
    let labels = prep.data.labels.clone();
    let selection = select_markers(&prep, labels.as_deref(), approach, config)?;
    let (test_predictions, metrics) = match &labels {
        Some(l) => {
            let (p, m) = knn_test_metrics(&prep, &selection.markers, l, protocol.knn_neighbors)?;
            (Some(p), Some(m))
        }
        None => (None, None),
    };
    let model_metrics = match (&selection.model, &labels) {
        (Some(model), Some(l)) if model.uses_classification() => {
            let pred = model.predict(&prep.rows(&prep.split.test))?;
            let truth: Vec<usize> = prep.split.test.iter().map(|&i| l[i]).collect();
            Some(classification_metrics(
                &truth,
                &pred,
                prep.data.n_classes(),
            )?)
        }
        _ => None,
    };
    Ok(SelectOutcome {
        selection,
        metrics,
        test_predictions,
        model_metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Approach,
    pub k: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub markers: Vec<usize>,
}

/// Mean and spread across seeds for one `(method, k)` cell. Variances are
/// population variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub method: Approach,
    pub k: usize,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub var_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_weighted_f1: f64,
    pub var_weighted_f1: f64,
    pub std_weighted_f1: f64,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut keys: Vec<(Approach, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.method, r.k)) {
            keys.push((r.method, r.k));
        }
    }
    keys.into_iter()
        .map(|(method, k)| {
            let cell: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.method == method && r.k == k)
                .collect();
            let acc: Vec<f64> = cell.iter().map(|r| r.accuracy).collect();
            let f1: Vec<f64> = cell.iter().map(|r| r.weighted_f1).collect();
            let (ma, va) = mean_var(&acc);
            let (mf, vf) = mean_var(&f1);
            BenchSummary {
                method,
                k,
                runs: cell.len(),
                mean_accuracy: ma,
                var_accuracy: va,
                std_accuracy: va.sqrt(),
                mean_weighted_f1: mf,
                var_weighted_f1: vf,
                std_weighted_f1: vf.sqrt(),
            }
        })
        .collect()
}

/// Every `(method, k, seed)` combination, fitted in parallel. Rows come back
/// in method-major, then k, then seed order.
pub fn run_benchmark(
    raw: &Dataset,
    methods: &[Approach],
    ks: &[usize],
    seeds: &[u64],
    config: &TrainConfig,
    protocol: &Protocol,
) -> Result<Vec<BenchRow>> {
    if methods.is_empty() || ks.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "benchmark needs at least one method, K and seed".into(),
        ));
    }
    let data = preprocess(raw, PreprocessMode::Classification, protocol.log_transform)?;
    let labels = data.labels()?.to_vec();
    let preps: Vec<Prepared> = seeds
        .iter()
        .map(|&s| Prepared::from_preprocessed(data.clone(), protocol, s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(Approach, usize, usize)> = methods
        .iter()
        .flat_map(|&m| {
            ks.iter()
                .flat_map(move |&k| (0..seeds.len()).map(move |s| (m, k, s)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(method, k, s)| {
            let seed = seeds[s];
            let cfg = TrainConfig {
                k,
                seed,
                ..config.clone()
            };
            let prep = &preps[s];
            let sel = select_markers(prep, Some(&labels), method, &cfg)?;
            let (_, m) = knn_test_metrics(prep, &sel.markers, &labels, protocol.knn_neighbors)?;
            Ok(BenchRow {
                method,
                k,
                seed,
                accuracy: m.accuracy,
                weighted_f1: m.weighted_f1,
                markers: sel.markers,
            })
        })
        .collect()
}

/// Which stages see the corrupted training labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseProtocol {
    /// Marker selection and the k-NN classifier both train on noisy labels.
    Both,
    /// Only marker selection sees noisy labels; k-NN trains on clean ones.
    SelectionOnly,
}

impl FromStr for NoiseProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Self::Both),
            "selection-only" => Ok(Self::SelectionOnly),
            _ => Err(Error::InvalidArgument(format!(
                "unknown noise protocol '{s}'"
            ))),
        }
    }
}

impl std::fmt::Display for NoiseProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Both => "both",
            Self::SelectionOnly => "selection-only",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub method: Approach,
    pub protocol: NoiseProtocol,
    pub noise: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub markers: Vec<usize>,
}

/// Label-noise sweep. For each seed the split is drawn from clean labels;
/// for each fraction `p` a fresh corruption of the training rows is drawn
/// from the seed's label-noise stream. Accuracy is always measured against
/// clean test labels.
pub fn run_noise(
    raw: &Dataset,
    method: Approach,
    fractions: &[f64],
    seeds: &[u64],
    protocol_kind: NoiseProtocol,
    config: &TrainConfig,
    protocol: &Protocol,
) -> Result<Vec<NoiseRow>> {
    if fractions.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "noise sweep needs at least one fraction and seed".into(),
        ));
    }
    let data = preprocess(raw, PreprocessMode::Classification, protocol.log_transform)?;
    let clean = data.labels()?.to_vec();
    let classes = data.n_classes();
    let preps: Vec<Prepared> = seeds
        .iter()
        .map(|&s| Prepared::from_preprocessed(data.clone(), protocol, s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|s| (0..fractions.len()).map(move |p| (s, p)))
        .collect();
    jobs.par_iter()
        .map(|&(s, p)| {
            let seed = seeds[s];
            let fraction = fractions[p];
            let prep = &preps[s];
            let mut rng = Rng::stream(seed, stream::LABEL_NOISE);
            let noisy = inject_label_noise(&clean, &prep.split.train, fraction, classes, &mut rng)?;
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            let sel = select_markers(prep, Some(&noisy), method, &cfg)?;
            let knn_labels = match protocol_kind {
                NoiseProtocol::Both => &noisy,
                NoiseProtocol::SelectionOnly => &clean,
            };
            let (_, m) = knn_test_metrics(prep, &sel.markers, knn_labels, protocol.knn_neighbors)?;
            Ok(NoiseRow {
                method,
                protocol: protocol_kind,
                noise: fraction,
                seed,
                accuracy: m.accuracy,
                weighted_f1: m.weighted_f1,
                markers: sel.markers,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ReconOutcome {
    pub selection: Selection,
    pub report: ReconReport,
    pub original_variances: Vec<f64>,
    pub reconstructed_variances: Vec<f64>,
    pub pca: Pca,
    pub original_coords: Matrix,
    pub reconstructed_coords: Matrix,
    /// Dataset rows of the test split, in the order of the matrices below.
    pub test_cells: Vec<usize>,
    pub test_original: Matrix,
    pub test_reconstructed: Matrix,
}

/// Generative-mode preprocessing, fit on train, reconstruct the test split
/// from its marker values and compare distributions.
pub fn run_reconstruct(
    raw: &Dataset,
    method: Method,
    config: &TrainConfig,
    protocol: &Protocol,
) -> Result<ReconOutcome> {
    if config.alpha_for(method) == 0.0 {
        return Err(Error::Unsupported(format!(
            "{method} models have no decoder; use unsupervised or joint"
        )));
    }
    let prep = Prepared::new(raw, PreprocessMode::Generative, protocol, config.seed)?;
    let labels = prep.data.labels.clone();
    let selection = select_markers(&prep, labels.as_deref(), Approach::Model(method), config)?;
    let model = selection
        .model
        .as_ref()
        .expect("model approaches return a model");
    let test_original = prep.rows(&prep.split.test);
    let test_reconstructed = model.reconstruct(&model.marker_values(&test_original)?)?;
    let test_labels = Prepared::labels_at(labels.as_deref(), &prep.split.test);
    let report = eval::recon_report(
        &test_original,
        &test_reconstructed,
        test_labels.as_deref(),
        &prep.data.class_names,
    )?;
    let (pca, mut coords) = eval::pca_project(&test_original, &[&test_reconstructed])?;
    let reconstructed_coords = coords.pop().unwrap();
    let original_coords = coords.pop().unwrap();
    Ok(ReconOutcome {
        selection,
        report,
        original_variances: test_original.column_variances(),
        reconstructed_variances: test_reconstructed.column_variances(),
        pca,
        original_coords,
        reconstructed_coords,
        test_cells: prep.split.test.clone(),
        test_original,
        test_reconstructed,
    })
}

/// Score a given marker panel with k-NN on the seed's split.
pub fn run_evaluate(
    raw: &Dataset,
    markers: &[usize],
    seed: u64,
    protocol: &Protocol,
) -> Result<ClassificationMetrics> {
    let prep = Prepared::new(raw, PreprocessMode::Classification, protocol, seed)?;
    let labels = prep.data.labels()?.to_vec();
    Ok(knn_test_metrics(&prep, markers, &labels, protocol.knn_neighbors)?.1)
}
