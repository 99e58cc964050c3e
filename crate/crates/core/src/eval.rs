//! Downstream evaluation of marker panels: k-NN classification, confusion
//! based metrics, and distributional comparisons between original and
//! reconstructed expression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_NEIGHBORS: usize = 5;
pub const EIGEN_TOL: f64 = 1e-9;
pub const EIGEN_MAX_ITER: usize = 10_000;

/// Majority vote among the `k` nearest training rows (Euclidean), ties in
/// the vote going to the smallest class id. Equidistant neighbours are
/// ordered by training index.
pub fn knn_classify(
    train_x: &Matrix,
    train_y: &[usize],
    test_x: &Matrix,
    k: usize,
) -> Result<Vec<usize>> {
    if train_x.cols() == 0 {
        return Err(Error::InvalidArgument(
            "k-NN needs at least one marker column".into(),
        ));
    }
    if train_x.cols() != test_x.cols() {
        return Err(Error::ShapeMismatch {
            op: "knn_classify",
            left: train_x.shape(),
            right: test_x.shape(),
        });
    }
    if train_y.len() != train_x.rows() {
        return Err(Error::InvalidArgument(
            "one label per training row required".into(),
        ));
    }
    if k == 0 || k > train_x.rows() {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k <= {} neighbours, got {k}",
            train_x.rows()
        )));
    }
    let classes = train_y.iter().max().map_or(0, |m| m + 1);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train_x.rows());
    let mut out = Vec::with_capacity(test_x.rows());
    for i in 0..test_x.rows() {
        let q = test_x.row(i);
        dist.clear();
        dist.extend((0..train_x.rows()).map(|t| {
            let d2: f64 = train_x
                .row(t)
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, t)
        }));
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; classes];
        for &(_, t) in &dist[..k] {
            votes[train_y[t]] += 1;
        }
        let best = votes
            .iter()
            .enumerate()
            .fold(0, |b, (c, &v)| if v > votes[b] { c } else { b });
        out.push(best);
    }
    Ok(out)
}

/// [`knn_classify`] using only the `markers` columns of full matrices.
pub fn knn_on_markers(
    train_x: &Matrix,
    train_y: &[usize],
    test_x: &Matrix,
    markers: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if markers.is_empty() {
        return Err(Error::InvalidArgument("empty marker set".into()));
    }
    if let Some(&j) = markers
        .iter()
        .find(|&&j| j >= train_x.cols() || j >= test_x.cols())
    {
        return Err(Error::InvalidArgument(format!("marker {j} out of range")));
    }
    knn_classify(
        &train_x.select_columns(markers),
        train_y,
        &test_x.select_columns(markers),
        k,
    )
}

/// Row = true class, column = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::InvalidArgument(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![vec![0; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::ClassOutOfRange {
                    id: t.max(p),
                    classes,
                });
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    pub fn column_sum(&self, c: usize) -> usize {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `M_c = 1 - precision`.
    pub misclassification: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    /// Mean of `M_c` over the classes present in truth or prediction.
    pub mean_misclassification: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: ConfusionMatrix,
}

/// Accuracy, per-class precision / recall / F1 / `M_c`, and their macro and
/// support-weighted averages. A class never predicted has precision 0 and
/// F1 0. Averages run over the classes that occur in `truth` or `predicted`.
pub fn classification_metrics(
    truth: &[usize],
    predicted: &[usize],
    classes: usize,
) -> Result<ClassificationMetrics> {
    let seen = truth.iter().chain(predicted).max().map_or(0, |m| m + 1);
    let classes = classes.max(seen);
    let confusion = ConfusionMatrix::new(truth, predicted, classes)?;
    let n = truth.len();
    let correct: usize = (0..classes).map(|c| confusion.counts[c][c]).sum();
    let per_class: Vec<ClassScores> = (0..classes)
        .map(|c| {
            let tp = confusion.counts[c][c] as f64;
            let predicted = confusion.column_sum(c);
            let support = confusion.row_sum(c);
            let precision = if predicted > 0 {
                tp / predicted as f64
            } else {
                0.0
            };
            let recall = if support > 0 {
                tp / support as f64
            } else {
                0.0
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                precision,
                recall,
                f1,
                misclassification: 1.0 - precision,
                support,
            }
        })
        .collect();
    let present: Vec<usize> = (0..classes)
        .filter(|&c| confusion.row_sum(c) > 0 || confusion.column_sum(c) > 0)
        .collect();
    let m = present.len().max(1) as f64;
    let macro_f1 = present.iter().map(|&c| per_class[c].f1).sum::<f64>() / m;
    let mean_misclassification = present
        .iter()
        .map(|&c| per_class[c].misclassification)
        .sum::<f64>()
        / m;
    let weighted_f1 = if n > 0 {
        per_class
            .iter()
            .map(|s| s.f1 * s.support as f64)
            .sum::<f64>()
            / n as f64
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        accuracy: if n > 0 {
            correct as f64 / n as f64
        } else {
            0.0
        },
        weighted_f1,
        macro_f1,
        mean_misclassification,
        per_class,
        confusion,
    })
}

fn same_shape(a: &Matrix, b: &Matrix, op: &'static str) -> Result<()> {
    a.check_same_shape(b, op)
}

/// Indices of the `count` largest values, ties to the lower index.
fn top_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

/// Jaccard index between the top-`floor(d / 5)` genes by population
/// variance in each matrix.
pub fn jaccard_top_variance(original: &Matrix, reconstructed: &Matrix) -> Result<f64> {
    same_shape(original, reconstructed, "jaccard_top_variance")?;
    let d = original.cols();
    if d < 5 {
        return Err(Error::InvalidArgument(format!(
            "need at least 5 genes, got {d}"
        )));
    }
    jaccard_top_count(original, reconstructed, d / 5)
}

/// Jaccard index between the top-`count` variance gene sets.
pub fn jaccard_top_count(original: &Matrix, reconstructed: &Matrix, count: usize) -> Result<f64> {
    same_shape(original, reconstructed, "jaccard_top_count")?;
    if count == 0 || count > original.cols() {
        return Err(Error::InvalidArgument(format!(
            "invalid top-set size {count}"
        )));
    }
    let a = top_indices(&original.column_variances(), count);
    let b = top_indices(&reconstructed.column_variances(), count);
    let inter = a.iter().filter(|j| b.contains(j)).count();
    let union = 2 * count - inter;
    Ok(inter as f64 / union as f64)
}

/// 1-based ranks, ties receiving the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs two equal-length vectors of length >= 2".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("constant rank vector".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman correlation between the per-gene variances of two matrices.
pub fn spearman_rho_variances(original: &Matrix, reconstructed: &Matrix) -> Result<f64> {
    same_shape(original, reconstructed, "spearman_rho_variances")?;
    if original.cols() < 2 {
        return Err(Error::InvalidArgument("need at least 2 genes".into()));
    }
    spearman(
        &original.column_variances(),
        &reconstructed.column_variances(),
    )
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Mean over rows of the Euclidean distance between corresponding rows.
pub fn mean_l2(original: &Matrix, reconstructed: &Matrix) -> Result<f64> {
    same_shape(original, reconstructed, "mean_l2")?;
    if original.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..original.rows())
        .map(|i| {
            original
                .row(i)
                .iter()
                .zip(reconstructed.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / original.rows() as f64)
}

/// One row of the reconstruction table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconRow {
    pub group: String,
    pub cells: usize,
    pub jaccard: f64,
    /// `None` when the variance ranks are degenerate for this group.
    pub spearman: Option<f64>,
    pub mean_l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    /// One row per class with cells, then the overall row `"All"`.
    pub rows: Vec<ReconRow>,
}

impl ReconReport {
    pub fn overall(&self) -> &ReconRow {
        self.rows.last().expect("report always has an overall row")
    }
}

fn recon_row(group: String, original: &Matrix, reconstructed: &Matrix) -> Result<ReconRow> {
    let spearman = match spearman_rho_variances(original, reconstructed) {
        Ok(r) => Some(r),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ReconRow {
        group,
        cells: original.rows(),
        jaccard: jaccard_top_variance(original, reconstructed)?,
        spearman,
        mean_l2: mean_l2(original, reconstructed)?,
    })
}

/// Jaccard / Spearman / mean-l2 per class (when labels are given) and over
/// all cells.
pub fn recon_report(
    original: &Matrix,
    reconstructed: &Matrix,
    labels: Option<&[usize]>,
    class_names: &[String],
) -> Result<ReconReport> {
    same_shape(original, reconstructed, "recon_report")?;
    let mut rows = Vec::new();
    if let Some(labels) = labels {
        if labels.len() != original.rows() {
            return Err(Error::InvalidArgument("one label per row required".into()));
        }
        for (c, name) in class_names.iter().enumerate() {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if idx.is_empty() {
                continue;
            }
            rows.push(recon_row(
                name.clone(),
                &original.select_rows(&idx),
                &reconstructed.select_rows(&idx),
            )?);
        }
    }
    rows.push(recon_row("All".into(), original, reconstructed)?);
    Ok(ReconReport { rows })
}

/// Leading eigenpairs of a symmetric positive semi-definite operator by
/// power iteration with deflation. `apply` computes `A v`. Each returned
/// eigenvector has unit norm and its largest-magnitude entry positive.
pub fn top_eigenpairs(
    dim: usize,
    count: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if count > dim {
        return Err(Error::InvalidArgument(format!(
            "cannot extract {count} eigenpairs in dimension {dim}"
        )));
    }
    let mut found: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
    let deflated = |v: &[f64], found: &[(f64, Vec<f64>)]| {
        let mut w = apply(v);
        for (lambda, u) in found {
            let proj = dot(u, v);
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= lambda * proj * ui;
            }
        }
        w
    };
    for _ in 0..count {
        // Deterministic start with no special alignment to coordinate axes.
        let mut v: Vec<f64> = (0..dim)
            .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_7).fract())
            .collect();
        for (_, u) in &found {
            let p = dot(u, &v);
            v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= p * ui);
        }
        normalize(&mut v);
        let mut lambda = 0.0;
        for iter in 0..EIGEN_MAX_ITER {
            let w = deflated(&v, &found);
            lambda = dot(&v, &w);
            let residual: f64 = w
                .iter()
                .zip(&v)
                .map(|(wi, vi)| (wi - lambda * vi).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = found.first().map_or(lambda.abs(), |f| f.0.abs()).max(1.0);
            if residual <= EIGEN_TOL * scale {
                break;
            }
            let norm = dot(&w, &w).sqrt();
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            v = w.into_iter().map(|x| x / norm).collect();
            if iter + 1 == EIGEN_MAX_ITER {
                log::warn!(
                    "power iteration hit {EIGEN_MAX_ITER} iterations; residual {residual:e}"
                );
            }
        }
        orient(&mut v);
        found.push((lambda.max(0.0), v));
    }
    Ok(found)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Flip so the largest-magnitude entry (first on ties) is positive.
fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Two-component PCA fitted on a reference matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub eigenvalues: [f64; 2],
    /// Two unit loading vectors, each of length `d`.
    pub components: [Vec<f64>; 2],
}

impl Pca {
    /// Fit on `reference` (population covariance). Fails on fewer than 3
    /// rows or a covariance of rank below 2.
    pub fn fit(reference: &Matrix) -> Result<Self> {
        let (n, d) = reference.shape();
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "PCA needs at least 3 rows, got {n}"
            )));
        }
        if d < 2 {
            return Err(Error::InvalidArgument(
                "PCA needs at least 2 columns".into(),
            ));
        }
        let mean = reference.column_means().into_vec();
        let mut centered = reference.clone();
        for i in 0..n {
            centered
                .row_mut(i)
                .iter_mut()
                .zip(&mean)
                .for_each(|(x, m)| *x -= m);
        }
        let pairs = top_eigenpairs(d, 2, |v| {
            let mut out = vec![0.0; d];
            for i in 0..n {
                let row = centered.row(i);
                let s = dot(row, v) / n as f64;
                out.iter_mut().zip(row).for_each(|(o, r)| *o += s * r);
            }
            out
        })?;
        let (l1, l2) = (pairs[0].0, pairs[1].0);
        if l2 <= 1e-12 * l1.max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate(format!(
                "covariance has rank < 2 (eigenvalues {l1:e}, {l2:e})"
            )));
        }
        let mut it = pairs.into_iter().map(|p| p.1);
        Ok(Self {
            mean,
            eigenvalues: [l1, l2],
            components: [it.next().unwrap(), it.next().unwrap()],
        })
    }

    /// `n x 2` coordinates after centring with the reference mean.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::ShapeMismatch {
                op: "pca_project",
                left: x.shape(),
                right: (x.rows(), self.mean.len()),
            });
        }
        Ok(Matrix::from_fn(x.rows(), 2, |i, c| {
            x.row(i)
                .iter()
                .zip(&self.mean)
                .zip(&self.components[c])
                .map(|((v, m), u)| (v - m) * u)
                .sum()
        }))
    }
}

/// Fit PCA on `reference` and project it and every matrix in `others`.
pub fn pca_project(reference: &Matrix, others: &[&Matrix]) -> Result<(Pca, Vec<Matrix>)> {
    let pca = Pca::fit(reference)?;
    let mut coords = vec![pca.project(reference)?];
    for m in others {
        coords.push(pca.project(m)?);
    }
    Ok((pca, coords))
}
