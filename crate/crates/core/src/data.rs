//! Expression matrices: CSV ingestion, preprocessing, splitting, label
//! noise and planted-marker synthetic data.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Matrix;

/// Cells x genes expression matrix with optional class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Option<Vec<usize>>,
    pub gene_names: Vec<String>,
    pub cell_ids: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        x: Matrix,
        labels: Option<Vec<usize>>,
        gene_names: Vec<String>,
        cell_ids: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if gene_names.len() != x.cols() || cell_ids.len() != x.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} gene names / {} cell ids for a {}x{} matrix",
                gene_names.len(),
                cell_ids.len(),
                x.rows(),
                x.cols()
            )));
        }
        if !unique(&gene_names) {
            return Err(Error::InvalidArgument("gene names must be unique".into()));
        }
        if !unique(&class_names) {
            return Err(Error::InvalidArgument("class names must be unique".into()));
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(Error::InvalidArgument("one label per cell required".into()));
            }
            if let Some(&id) = l.iter().find(|&&c| c >= class_names.len()) {
                return Err(Error::ClassOutOfRange {
                    id,
                    classes: class_names.len(),
                });
            }
        }
        Ok(Self {
            x,
            labels,
            gene_names,
            cell_ids,
            class_names,
        })
    }

    /// Unnamed dataset with generated identifiers.
    pub fn from_matrix(x: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let classes = labels
            .as_ref()
            .map_or(0, |l| l.iter().max().map_or(0, |m| m + 1));
        let genes = (0..x.cols()).map(|j| format!("g{j}")).collect();
        let cells = (0..x.rows()).map(|i| format!("c{i}")).collect();
        let class_names = (0..classes).map(|c| format!("class{c}")).collect();
        Self::new(x, labels, genes, cells, class_names)
    }

    pub fn n_cells(&self) -> usize {
        self.x.rows()
    }

    pub fn n_genes(&self) -> usize {
        self.x.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or(Error::MissingLabels("dataset has no label column"))
    }

    /// Rows `indices` as a new dataset (class table kept whole).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            gene_names: self.gene_names.clone(),
            cell_ids: indices.iter().map(|&i| self.cell_ids[i].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

fn unique(names: &[String]) -> bool {
    let mut seen = HashSet::with_capacity(names.len());
    names.iter().all(|n| seen.insert(n.as_str()))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Load a cells-by-genes CSV. The header row names the genes; a leading
/// column with an empty header is read as cell identifiers. When
/// `label_column` is given that column becomes the class labels, mapped to
/// dense ids in sorted name order (numeric order if every name is an
/// integer).
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let id_col = (headers.get(0) == Some("")).then_some(0);
    let label_col = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_error(path, 1, format!("label column '{name}' not found")))?,
        ),
        None => None,
    };
    let gene_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != id_col && Some(c) != label_col)
        .collect();
    let gene_names: Vec<String> = gene_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut cell_ids = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(row + 2, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for &c in &gene_cols {
            let field = record[c].trim();
            let v: f64 = field.parse().map_err(|_| {
                parse_error(
                    path,
                    line,
                    format!("non-numeric value '{field}' in column '{}'", &headers[c]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    line,
                    format!("non-finite value '{field}'"),
                ));
            }
            values.push(v);
        }
        if let Some(c) = label_col {
            raw_labels.push(record[c].to_string());
        }
        cell_ids.push(match id_col {
            Some(c) => record[c].to_string(),
            None => format!("c{row}"),
        });
    }
    let x = Matrix::from_vec(cell_ids.len(), gene_names.len(), values)?;
    let (labels, class_names) = if label_col.is_some() {
        let (ids, names) = encode_labels(&raw_labels);
        (Some(ids), names)
    } else {
        (None, Vec::new())
    };
    Dataset::new(x, labels, gene_names, cell_ids, class_names)
}

fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let set: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    let mut names: Vec<String> = set.into_iter().map(str::to_string).collect();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap());
    }
    let ids = raw
        .iter()
        .map(|r| names.iter().position(|n| n == r).unwrap())
        .collect();
    (ids, names)
}

/// Write a dataset in the format [`load_csv`] reads: an unnamed cell-id
/// column, one column per gene, then `label_column` when labels exist.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_error(path, 0, e.to_string()))?;
    let mut header = vec![String::new()];
    header.extend(ds.gene_names.iter().cloned());
    if ds.labels.is_some() {
        header.push(label_column.to_string());
    }
    let io = |e: csv::Error| parse_error(path, 0, e.to_string());
    w.write_record(&header).map_err(io)?;
    for i in 0..ds.n_cells() {
        let mut rec = vec![ds.cell_ids[i].clone()];
        rec.extend(ds.x.row(i).iter().map(|v| v.to_string()));
        if let Some(l) = &ds.labels {
            rec.push(ds.class_names[l[i]].clone());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    /// `log2(1 + x)`, then each gene to mean 0 / variance 1.
    Classification,
    /// `log2(1 + x)`, then the whole matrix to mean 0 / variance 1.
    Generative,
}

/// Normalize expression values. `log_transform = false` skips the
/// `log2(1 + x)` step for data that is already on a log scale.
pub fn preprocess(ds: &Dataset, mode: PreprocessMode, log_transform: bool) -> Result<Dataset> {
    let mut x = ds.x.clone();
    if log_transform {
        if let Some(v) = x.as_slice().iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "log transform needs non-negative expression values, found {v}"
            )));
        }
        x.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = (1.0 + *v).log2());
    }
    match mode {
        PreprocessMode::Classification => {
            let means = x.column_means().into_vec();
            let sds: Vec<f64> = x.column_variances().into_iter().map(f64::sqrt).collect();
            for i in 0..x.rows() {
                for ((v, m), s) in x.row_mut(i).iter_mut().zip(&means).zip(&sds) {
                    *v = if *s > 0.0 { (*v - m) / s } else { 0.0 };
                }
            }
        }
        PreprocessMode::Generative => {
            let mean = x.mean();
            let var = x
                .as_slice()
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / x.len() as f64;
            let sd = var.sqrt();
            x.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 });
        }
    }
    Ok(Dataset { x, ..ds.clone() })
}

pub const TRAIN_FRACTION: f64 = 0.7;
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Row indices of the train / validation / test partition, each ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// 70 / 10 / 20 random split. With labels and `stratified`, each class is
/// apportioned across the three parts in proportion to its size.
pub fn split(
    n: usize,
    labels: Option<&[usize]>,
    seed: u64,
    stratified: bool,
) -> Result<SplitIndices> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 rows to split, got {n}"
        )));
    }
    let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
    let n_val = (n as f64 * VALIDATION_FRACTION).round() as usize;
    let mut rng = Rng::stream(seed, stream::SPLIT);

    let groups: Vec<Vec<usize>> = match labels.filter(|_| stratified) {
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::InvalidArgument(
                    "label count differs from row count".into(),
                ));
            }
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            let mut groups = vec![Vec::new(); classes];
            for (i, &c) in labels.iter().enumerate() {
                groups[c].push(i);
            }
            for (c, g) in groups.iter().enumerate() {
                if !g.is_empty() && g.len() < 3 {
                    log::warn!(
                        "class {c} has only {} members; stratification is best-effort",
                        g.len()
                    );
                }
            }
            groups
        }
        None => vec![(0..n).collect()],
    };
    let mut groups = groups;
    for g in &mut groups {
        rng.shuffle(g);
    }

    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let train_counts = apportion(&sizes, n_train);
    let remaining: Vec<usize> = sizes
        .iter()
        .zip(&train_counts)
        .map(|(s, t)| s - t)
        .collect();
    let val_counts = apportion_capped(&sizes, &remaining, n_val);

    let mut out = SplitIndices {
        train: Vec::with_capacity(n_train),
        validation: Vec::with_capacity(n_val),
        test: Vec::with_capacity(n - n_train - n_val),
    };
    for ((g, &t), &v) in groups.iter().zip(&train_counts).zip(&val_counts) {
        out.train.extend_from_slice(&g[..t]);
        out.validation.extend_from_slice(&g[t..t + v]);
        out.test.extend_from_slice(&g[t + v..]);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Largest-remainder allocation of `total` across groups proportional to
/// `sizes`; ties go to the lower group index.
fn apportion(sizes: &[usize], total: usize) -> Vec<usize> {
    apportion_capped(sizes, sizes, total)
}

/// Like [`apportion`] but never gives a group more than `caps[i]`.
fn apportion_capped(sizes: &[usize], caps: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * total as f64 / n as f64)
        .collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .zip(caps)
        .map(|(q, &c)| (q.floor() as usize).min(c))
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    while assigned < total {
        let before = assigned;
        for &i in &order {
            if assigned == total {
                break;
            }
            if counts[i] < caps[i] {
                counts[i] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    counts
}

/// Replace the labels of `floor(fraction * |train|)` uniformly chosen
/// training rows with labels drawn uniformly from all `classes` (the new
/// label may equal the old one). Rows outside `train` are never touched.
pub fn inject_label_noise(
    labels: &[usize],
    train: &[usize],
    fraction: f64,
    classes: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "noise fraction {fraction} outside [0, 1]"
        )));
    }
    let mut out = labels.to_vec();
    let count = (fraction * train.len() as f64).floor() as usize;
    if count == 0 || classes == 0 {
        return Ok(out);
    }
    for pos in rng.sample_indices(train.len(), count) {
        out[train[pos]] = rng.below(classes);
    }
    Ok(out)
}

/// Parameters of planted-marker synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub markers: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 100,
            classes: 4,
            markers: 5,
            separation: 4.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Ascending indices of the informative genes.
    pub planted: Vec<usize>,
}

/// Generate class-balanced data where only `markers` genes carry signal.
///
/// Every planted gene of a class-`c` cell is `N(separation * c, 1)`, so
/// neighbouring classes sit `separation` apart. Every other gene is
/// `N(0, noise^2)` independent of the class.
pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.classes < 2 || spec.markers > spec.d || spec.n == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid synthetic spec {spec:?}"
        )));
    }
    let mut rng = Rng::stream(spec.seed, stream::SYNTH);
    let mut planted = rng.sample_indices(spec.d, spec.markers);
    planted.sort_unstable();
    let mut is_planted = vec![false; spec.d];
    for &j in &planted {
        is_planted[j] = true;
    }
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    let x = Matrix::from_fn(spec.n, spec.d, |i, j| {
        if is_planted[j] {
            spec.separation * labels[i] as f64 + rng.normal()
        } else {
            spec.noise * rng.normal()
        }
    });
    let mut dataset = Dataset::from_matrix(x, Some(labels))?;
    dataset.class_names = (0..spec.classes).map(|c| format!("class{c}")).collect();
    Ok(SyntheticData { dataset, planted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_csv() {
        let f = write_tmp("a,b,type\n1,2,x\n3.5,4,y\n0,1e2,x\n");
        let ds = load_csv(f.path(), Some("type")).unwrap();
        assert_eq!(
            ds.x,
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.5, 4.0], vec![0.0, 100.0]]).unwrap()
        );
        assert_eq!(ds.gene_names, vec!["a", "b"]);
        assert_eq!(ds.labels, Some(vec![0, 1, 0]));
        assert_eq!(ds.class_names, vec!["x", "y"]);
    }

    #[test]
    fn loads_without_labels_and_with_ids() {
        let f = write_tmp(",a,b\ncellA,1,2\ncellB,3,4\n");
        let ds = load_csv(f.path(), None).unwrap();
        assert!(ds.labels.is_none());
        assert_eq!(ds.cell_ids, vec!["cellA", "cellB"]);
        assert!(ds.labels().is_err());
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let f = write_tmp("a,l\n1,10\n2,2\n3,1\n");
        let ds = load_csv(f.path(), Some("l")).unwrap();
        assert_eq!(ds.class_names, vec!["1", "2", "10"]);
        assert_eq!(ds.labels, Some(vec![2, 1, 0]));
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let f = write_tmp("a,b\n1,2\n3\n");
        let err = load_csv(f.path(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let f = write_tmp("a,b\n1,2\n3,oops\n");
        let err = load_csv(f.path(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("oops"));

        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), Some("label")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let syn = synthesize(&SyntheticSpec {
            n: 20,
            d: 6,
            markers: 2,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&syn.dataset, &path, "label").unwrap();
        let back = load_csv(&path, Some("label")).unwrap();
        assert_eq!(back, syn.dataset);
    }

    #[test]
    fn preprocess_examples() {
        let ds = Dataset::from_matrix(Matrix::zeros(4, 3), None).unwrap();
        let out = preprocess(&ds, PreprocessMode::Classification, true).unwrap();
        assert_eq!(out.x.max_abs(), 0.0);

        let ds = Dataset::from_matrix(Matrix::scalar(1.0), None).unwrap();
        let out = preprocess(&ds, PreprocessMode::Generative, true).unwrap();
        assert_eq!(out.x.item(), 0.0); // log2(2) = 1, then centered

        let ds = Dataset::from_matrix(Matrix::from_rows(&[vec![-1.0]]).unwrap(), None).unwrap();
        assert!(preprocess(&ds, PreprocessMode::Classification, true).is_err());
    }

    #[test]
    fn log_transform_of_one_is_one() {
        let ds = Dataset::from_matrix(
            Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 3.0]]).unwrap(),
            None,
        )
        .unwrap();
        let out = preprocess(&ds, PreprocessMode::Classification, true).unwrap();
        // column 0 is constant log2(2) = 1 and standardizes to 0
        assert_eq!(out.x.column(0), vec![0.0, 0.0]);
        assert!((out.x[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generative_statistics_and_idempotence() {
        let mut rng = Rng::new(3);
        let x = Matrix::from_fn(30, 8, |_, _| rng.uniform() * 50.0);
        let ds = Dataset::from_matrix(x, None).unwrap();
        let once = preprocess(&ds, PreprocessMode::Generative, true).unwrap();
        let mean = once.x.mean();
        let var = once
            .x
            .as_slice()
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / once.x.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
        let twice = preprocess(&once, PreprocessMode::Generative, false).unwrap();
        let diff = once
            .x
            .zip_map(&twice.x, "idem", |a, b| (a - b).abs())
            .unwrap();
        assert!(diff.max_abs() < 1e-9);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split(100, None, 1, true).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (70, 10, 20)
        );
        assert_eq!(s, split(100, None, 1, true).unwrap());
        assert_ne!(s, split(100, None, 2, true).unwrap());
        assert!(split(9, None, 1, true).is_err());
    }

    #[test]
    fn stratified_split_keeps_class_balance() {
        let labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let s = split(200, Some(&labels), 4, true).unwrap();
        let ones =
            s.train.iter().filter(|&&i| labels[i] == 1).count() as f64 / s.train.len() as f64;
        assert!((ones - 0.5).abs() <= 0.05);
    }

    proptest! {
        #[test]
        fn split_partitions_exactly(
            n in 10usize..300,
            classes in 1usize..7,
            seed in any::<u64>(),
            stratified in any::<bool>(),
        ) {
            let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % classes).collect();
            let s = split(n, Some(&labels), seed, stratified).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let t = (n as f64 * 0.7).round() as i64;
            let v = (n as f64 * 0.1).round() as i64;
            prop_assert!((s.train.len() as i64 - t).abs() <= 1);
            prop_assert!((s.validation.len() as i64 - v).abs() <= 1);
        }

        #[test]
        fn label_noise_is_bounded(
            p in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = (0..120).map(|i| i % 3).collect();
            let train: Vec<usize> = (0..120).step_by(2).collect();
            let noisy = inject_label_noise(&labels, &train, p, 3, &mut Rng::new(seed)).unwrap();
            let changed = labels.iter().zip(&noisy).filter(|(a, b)| a != b).count();
            prop_assert!(changed <= (p * train.len() as f64).ceil() as usize);
            for i in (1..120).step_by(2) {
                prop_assert_eq!(labels[i], noisy[i]);
            }
        }
    }

    #[test]
    fn label_noise_examples() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 2).collect();
        let train: Vec<usize> = (0..10_000).collect();
        let same = inject_label_noise(&labels, &train, 0.0, 2, &mut Rng::new(1)).unwrap();
        assert_eq!(same, labels);
        let noisy = inject_label_noise(&labels, &train, 1.0, 2, &mut Rng::new(1)).unwrap();
        let flipped = labels.iter().zip(&noisy).filter(|(a, b)| a != b).count() as f64 / 10_000.0;
        assert!((flipped - 0.5).abs() <= 0.05, "{flipped}");
    }

    #[test]
    fn synthetic_layout() {
        let syn = synthesize(&SyntheticSpec::default()).unwrap();
        assert_eq!(syn.dataset.x.shape(), (1000, 100));
        assert_eq!(syn.planted.len(), 5);
        assert_eq!(syn.dataset.n_classes(), 4);
        let again = synthesize(&SyntheticSpec::default()).unwrap();
        assert_eq!(syn.dataset, again.dataset);
        assert!(synthesize(&SyntheticSpec {
            classes: 1,
            ..Default::default()
        })
        .is_err());
    }
}
