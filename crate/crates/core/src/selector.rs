//! Gumbel-Softmax selection layer.
//!
//! Each of the `K` selector nodes draws a relaxed one-hot vector
//! `gamma_k = softmax((log_pi + g_k) / tau)` over the `d` input features,
//! where `g_k` is i.i.d. Gumbel(0, 1) noise supplied from outside the graph
//! (reparameterization). A node emits `<x, gamma_k>`, so a batch is projected
//! from `d` to `K` columns. As `tau -> 0` every row approaches a one-hot
//! vector and the projection becomes hard feature selection.
//!
//! In the main model the logits are shared by all nodes and maintained as an
//! exponential moving average of per-batch mean logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchStats, Mlp, Mode};
use crate::rng::Rng;
use crate::tensor::{softmax_rows, Graph, Matrix, Var};

/// Added to the logits of user-supplied prior markers.
pub const PRIOR_BOOST: f64 = 2.0;
/// Keeps `log(1 - a)` finite in relaxed top-k sampling.
const TOP_K_FLOOR: f64 = 1e-12;

/// Exponential temperature decay from `initial` at epoch 0 to `end` at
/// epoch `epochs - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub initial: f64,
    pub end: f64,
    pub epochs: usize,
}

impl TemperatureSchedule {
    pub fn new(initial: f64, end: f64, epochs: usize) -> Result<Self> {
        if !(initial >= 2.0 && initial.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial temperature must be >= 2, got {initial}"
            )));
        }
        if !(end > 0.001 && end < 0.1) {
            return Err(Error::InvalidArgument(format!(
                "final temperature must lie in (0.001, 0.1), got {end}"
            )));
        }
        if epochs < 2 {
            return Err(Error::InvalidArgument(
                "temperature schedule needs >= 2 epochs".into(),
            ));
        }
        Ok(Self {
            initial,
            end,
            epochs,
        })
    }

    /// Temperature for a 0-based epoch index; clamps past the last epoch.
    pub fn at(&self, epoch: usize) -> f64 {
        let last = self.epochs - 1;
        let e = epoch.min(last);
        if e == last {
            return self.end;
        }
        self.initial * (self.end / self.initial).powf(e as f64 / last as f64)
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self {
            initial: 4.0,
            end: 0.01,
            epochs: 100,
        }
    }
}

/// Global aggregated logits and selection budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorState {
    pub logits: Vec<f64>,
    pub beta: f64,
    pub k: usize,
}

impl SelectorState {
    /// Logits start at the constant 0.
    pub fn new(d: usize, k: usize, beta: f64) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= K <= d, got K={k}, d={d}"
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidArgument(format!(
                "beta must lie in [0, 1], got {beta}"
            )));
        }
        Ok(Self {
            logits: vec![0.0; d],
            beta,
            k,
        })
    }

    /// Raise the starting logits of `prior` features by [`PRIOR_BOOST`].
    pub fn with_prior(mut self, prior: &[usize]) -> Result<Self> {
        for &j in prior {
            let slot = self
                .logits
                .get_mut(j)
                .ok_or_else(|| Error::InvalidArgument(format!("prior marker {j} out of range")))?;
            *slot += PRIOR_BOOST;
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.logits.len()
    }

    /// `log_pi <- beta * log_pi + (1 - beta) * batch_logits`.
    pub fn aggregate(&mut self, batch_logits: &[f64]) -> Result<()> {
        if batch_logits.len() != self.logits.len() {
            return Err(Error::ShapeMismatch {
                op: "aggregate_logits",
                left: (1, self.logits.len()),
                right: (1, batch_logits.len()),
            });
        }
        let b = self.beta;
        for (s, &n) in self.logits.iter_mut().zip(batch_logits) {
            *s = b * *s + (1.0 - b) * n;
        }
        Ok(())
    }

    /// Tape version of [`SelectorState::aggregate`]: the previous state is a
    /// constant, the batch logits stay differentiable.
    pub fn aggregate_on(&self, g: &mut Graph, batch_logits: Var) -> Result<Var> {
        let prev = g.constant(Matrix::row_vector(&self.logits)?.scale(self.beta));
        let fresh = g.scale(batch_logits, 1.0 - self.beta)?;
        g.add(prev, fresh)
    }

    pub fn markers(&self) -> Vec<usize> {
        extract_markers(&self.logits, self.k)
    }
}

/// Batch-mean instance logits on a tape: `f_pi` is applied to every row and
/// the outputs are averaged into a `1 x d` vector.
pub fn instance_logits_on(
    g: &mut Graph,
    net: &Mlp,
    params: &[Var],
    batch: Var,
    mode: Mode,
) -> Result<(Var, Vec<Option<BatchStats>>)> {
    if g.shape(batch).0 == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let out = net.forward(g, params, batch, mode)?;
    Ok((g.mean_rows(out.output)?, out.stats))
}

/// Eval-mode batch-mean instance logits.
pub fn instance_logits(net: &Mlp, batch: &Matrix) -> Result<Vec<f64>> {
    if batch.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(net.infer(batch)?.column_means().into_vec())
}

/// `rows x d` i.i.d. Gumbel(0, 1) draws.
pub fn gumbel_noise(rows: usize, d: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, d, |_, _| rng.gumbel())
}

/// Relaxed one-hot rows from one shared `1 x d` logit vector and `K x d`
/// noise: row k is `softmax((logits + noise_k) / tau)`.
pub fn relaxed_rows_shared(g: &mut Graph, logits: Var, noise: &Matrix, tau: f64) -> Result<Var> {
    let noise = g.constant(noise.clone());
    let keys = g.add_row(noise, logits)?;
    g.softmax_rows(keys, tau)
}

/// Relaxed one-hot rows from `K x d` per-node logits.
pub fn relaxed_rows_per_node(g: &mut Graph, logits: Var, noise: &Matrix, tau: f64) -> Result<Var> {
    let noise = g.constant(noise.clone());
    let keys = g.add(logits, noise)?;
    g.softmax_rows(keys, tau)
}

/// Relaxed top-k subset sampling from one `1 x d` logit vector and one
/// `1 x d` noise row. Row j is a relaxed one-hot vector for the j-th pick;
/// mass already taken by earlier picks is suppressed through
/// `keys <- keys + log(1 - a_j)`.
pub fn relaxed_top_k(
    g: &mut Graph,
    logits: Var,
    noise: &Matrix,
    k: usize,
    tau: f64,
) -> Result<Var> {
    if noise.rows() != 1 {
        return Err(Error::InvalidArgument(
            "relaxed top-k takes a single noise row".into(),
        ));
    }
    let noise = g.constant(noise.clone());
    let mut keys = g.add(logits, noise)?;
    let mut rows = Vec::with_capacity(k);
    for j in 0..k {
        let a = g.softmax_rows(keys, tau)?;
        rows.push(a);
        if j + 1 < k {
            let neg = g.scale(a, -1.0)?;
            let rest = g.add_scalar(neg, 1.0 + TOP_K_FLOOR)?;
            let penalty = g.log(rest)?;
            keys = g.add(keys, penalty)?;
        }
    }
    g.concat_rows(&rows)
}

/// `x * gamma^T`: column k of the output is `<x_i, gamma_k>`.
pub fn project(g: &mut Graph, x: Var, gamma: Var) -> Result<Var> {
    let gt = g.transpose(gamma)?;
    g.matmul(x, gt)
}

/// A draw of `K` relaxed one-hot vectors with the noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct GumbelSample {
    /// `K x d`, each row on the probability simplex.
    pub gamma: Matrix,
    /// `K x d` Gumbel draws.
    pub noise: Matrix,
}

/// Draw `k` relaxed one-hot vectors sharing `logits`.
pub fn sample_gumbel_softmax(
    logits: &[f64],
    k: usize,
    tau: f64,
    rng: &mut Rng,
) -> Result<GumbelSample> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidTemperature(tau));
    }
    let noise = gumbel_noise(k, logits.len(), rng);
    sample_with_noise(logits, noise, tau)
}

/// Deterministic relaxed sample for given noise.
pub fn sample_with_noise(logits: &[f64], noise: Matrix, tau: f64) -> Result<GumbelSample> {
    if noise.cols() != logits.len() {
        return Err(Error::ShapeMismatch {
            op: "sample_gumbel_softmax",
            left: (1, logits.len()),
            right: noise.shape(),
        });
    }
    let mut keys = noise.clone();
    for i in 0..keys.rows() {
        for (v, l) in keys.row_mut(i).iter_mut().zip(logits) {
            *v += l;
        }
    }
    let gamma = softmax_rows(&keys, tau)?;
    Ok(GumbelSample { gamma, noise })
}

/// Plain version of [`project`].
pub fn project_selection(batch: &Matrix, sample: &GumbelSample) -> Result<Matrix> {
    if batch.cols() != sample.gamma.cols() {
        return Err(Error::ShapeMismatch {
            op: "project_selection",
            left: batch.shape(),
            right: sample.gamma.shape(),
        });
    }
    batch.matmul_t(&sample.gamma)
}

/// `K x d` one-hot rows at the given feature indices.
pub fn hard_selection(markers: &[usize], d: usize) -> Matrix {
    let mut m = Matrix::zeros(markers.len(), d);
    for (k, &j) in markers.iter().enumerate() {
        m[(k, j)] = 1.0;
    }
    m
}

/// The `k` largest logits as distinct indices, descending; ties go to the
/// lower index.
pub fn extract_markers(logits: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Density of the Gumbel-Softmax (Concrete) distribution at an interior
/// simplex point `gamma` with class weights `pi` and temperature `tau`:
///
/// `(K-1)! tau^(K-1) (sum_i pi_i / gamma_i^tau)^(-K) prod_i pi_i / gamma_i^(tau+1)`.
///
/// Evaluated in log space.
pub fn gumbel_softmax_density(gamma: &[f64], pi: &[f64], tau: f64) -> Result<f64> {
    let k = gamma.len();
    if k < 2 || pi.len() != k {
        return Err(Error::InvalidArgument(format!(
            "density needs matching gamma/pi of length >= 2, got {} and {}",
            k,
            pi.len()
        )));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidTemperature(tau));
    }
    if gamma.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidArgument(
            "gamma must lie strictly inside the simplex".into(),
        ));
    }
    if (gamma.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("gamma must sum to 1".into()));
    }
    if pi.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidArgument("pi must be positive".into()));
    }
    let log_fact: f64 = (1..k).map(|i| (i as f64).ln()).sum();
    let log_sum = pi
        .iter()
        .zip(gamma)
        .map(|(p, g)| p.ln() - tau * g.ln())
        .fold(f64::NEG_INFINITY, log_add_exp);
    let log_prod: f64 = pi
        .iter()
        .zip(gamma)
        .map(|(p, g)| p.ln() - (tau + 1.0) * g.ln())
        .sum();
    let log_p = log_fact + (k as f64 - 1.0) * tau.ln() - k as f64 * log_sum + log_prod;
    Ok(log_p.exp())
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
