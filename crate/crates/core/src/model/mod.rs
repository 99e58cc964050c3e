//! The marker-selection model: a Gumbel-Softmax selector feeding a
//! classifier `f_W` and a variational autoencoder `f_theta`, trained on
//!
//! `loss = alpha * (MSE(x_hat, x) + kl_weight * KL / d) + (1 - alpha) * CE(f_W(x_S), y)`.
//!
//! `alpha = 0` is the supervised objective, `alpha = 1` the unsupervised one
//! and `alpha = 0.5` the joint one. A term whose weight is exactly zero is
//! not evaluated at all.

mod train;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, BatchStats, Mlp, Mode};
use crate::rng::{stream, Rng};
use crate::selector::{self, extract_markers, hard_selection, SelectorState, TemperatureSchedule};
use crate::tensor::{Graph, Matrix, Var};

pub use train::{LrProbe, StepInfo, TrainReport};

pub const FORMAT_VERSION: u32 = 1;
pub const LATENT_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Supervised,
    Unsupervised,
    Joint,
    /// `K` independent learnable logit vectors, no instance network.
    ConcreteVae,
    /// One learnable logit vector with relaxed top-k subset sampling.
    GlobalGumbel,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Supervised,
        Method::Unsupervised,
        Method::Joint,
        Method::ConcreteVae,
        Method::GlobalGumbel,
    ];

    pub fn default_alpha(self) -> f64 {
        match self {
            Method::Supervised => 0.0,
            Method::Joint => 0.5,
            Method::Unsupervised | Method::ConcreteVae | Method::GlobalGumbel => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::Unsupervised => "unsupervised",
            Method::Joint => "joint",
            Method::ConcreteVae => "concrete-vae",
            Method::GlobalGumbel => "global-gumbel",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Classification term of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassLoss {
    #[default]
    CrossEntropy,
    /// Squared error between the softmax output and the one-hot label.
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainConfig {
    pub k: usize,
    pub hidden: usize,
    pub latent: usize,
    pub batch_size: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
    /// Epochs over which the temperature decays to `tau_final`; capped at
    /// `max_epochs`. Early stopping waits for the decay to finish.
    pub anneal_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Overrides the method's default weight when set.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub tau_initial: f64,
    pub tau_final: f64,
    pub kl_weight: f64,
    pub class_loss: ClassLoss,
    /// Skip the learning-rate search and use this rate.
    pub learning_rate: Option<f64>,
    pub lr_grid_points: usize,
    pub prior_markers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 5,
            hidden: 64,
            latent: LATENT_DIM,
            batch_size: 64,
            min_epochs: 25,
            max_epochs: 100,
            anneal_epochs: 50,
            patience: 3,
            seed: 0,
            alpha: None,
            beta: 0.9,
            tau_initial: 4.0,
            tau_final: 0.01,
            kl_weight: 1.0,
            class_loss: ClassLoss::CrossEntropy,
            learning_rate: None,
            lr_grid_points: 10,
            prior_markers: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn alpha_for(&self, method: Method) -> f64 {
        self.alpha.unwrap_or_else(|| method.default_alpha())
    }

    /// Exponential decay over the first `anneal_epochs` epochs, then held at
    /// `tau_final`.
    pub fn schedule(&self) -> Result<TemperatureSchedule> {
        TemperatureSchedule::new(
            self.tau_initial,
            self.tau_final,
            self.anneal_epochs.min(self.max_epochs).max(2),
        )
    }

    /// The first epoch count at which early stopping may end training.
    pub fn earliest_stop(&self) -> usize {
        self.min_epochs.max(self.anneal_epochs.min(self.max_epochs))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.hidden == 0 || self.latent == 0 {
            return bad("hidden and latent sizes must be positive".into());
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("alpha must lie in [0, 1], got {a}"));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.min_epochs > self.max_epochs || self.max_epochs < 2 {
            return bad(format!(
                "need 2 <= max epochs and min <= max, got {}..{}",
                self.min_epochs, self.max_epochs
            ));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad(format!(
                "KL weight must be non-negative, got {}",
                self.kl_weight
            ));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("learning rate must be positive, got {lr}"));
            }
        }
        if self.learning_rate.is_none() && self.lr_grid_points == 0 {
            return bad("learning-rate grid needs at least one point".into());
        }
        self.schedule().map(|_| ())
    }
}

/// How the `K x d` relaxed selection matrix is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selector {
    /// `f_pi` maps each cell to logits; their batch mean is folded into a
    /// moving average shared by all `K` nodes.
    Instance { net: Mlp, state: SelectorState },
    /// `K x d` free logits, one row per node.
    Concrete { logits: Matrix },
    /// `1 x d` free logits sampled as a relaxed `k`-subset.
    GlobalGumbel { logits: Matrix, k: usize },
}

impl Selector {
    pub fn k(&self) -> usize {
        match self {
            Selector::Instance { state, .. } => state.k,
            Selector::Concrete { logits } => logits.rows(),
            Selector::GlobalGumbel { k, .. } => *k,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Selector::Instance { state, .. } => state.dim(),
            Selector::Concrete { logits } | Selector::GlobalGumbel { logits, .. } => logits.cols(),
        }
    }

    /// Rows of Gumbel noise consumed per step.
    pub fn noise_rows(&self) -> usize {
        match self {
            Selector::GlobalGumbel { .. } => 1,
            _ => self.k(),
        }
    }

    /// Current marker panel, `K` distinct indices in rank order.
    pub fn markers(&self) -> Vec<usize> {
        match self {
            Selector::Instance { state, .. } => state.markers(),
            Selector::Concrete { logits } => concrete_markers(logits),
            Selector::GlobalGumbel { logits, k } => extract_markers(logits.as_slice(), *k),
        }
    }

    /// Per-feature importance: the aggregated logits, or for per-node
    /// logits the best score any node gives the feature.
    pub fn scores(&self) -> Vec<f64> {
        match self {
            Selector::Instance { state, .. } => state.logits.clone(),
            Selector::Concrete { logits } => (0..logits.cols())
                .map(|j| {
                    logits
                        .column(j)
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect(),
            Selector::GlobalGumbel { logits, .. } => logits.as_slice().to_vec(),
        }
    }

    fn parameters(&self) -> Vec<&Matrix> {
        match self {
            Selector::Instance { net, .. } => net.parameters(),
            Selector::Concrete { logits } | Selector::GlobalGumbel { logits, .. } => vec![logits],
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Selector::Instance { net, .. } => net.parameters_mut(),
            Selector::Concrete { logits } | Selector::GlobalGumbel { logits, .. } => vec![logits],
        }
    }

    fn parameter_names(&self) -> Vec<String> {
        match self {
            Selector::Instance { net, .. } => net.parameter_names("selector"),
            _ => vec!["selector.logits".into()],
        }
    }
}

/// Markers from per-node logits: each row's argmax in row order, duplicates
/// dropped, then free slots filled with the largest remaining entries
/// (ties by row, then column).
pub fn concrete_markers(logits: &Matrix) -> Vec<usize> {
    let (k, d) = logits.shape();
    let mut out: Vec<usize> = Vec::with_capacity(k);
    for r in 0..k {
        let best = extract_markers(logits.row(r), 1)[0];
        if !out.contains(&best) {
            out.push(best);
        }
    }
    if out.len() < k {
        let mut rest: Vec<(f64, usize, usize)> = (0..k)
            .flat_map(|r| (0..d).map(move |j| (r, j)))
            .filter(|(_, j)| !out.contains(j))
            .map(|(r, j)| (logits[(r, j)], r, j))
            .collect();
        rest.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, _, j) in rest {
            if out.len() == k {
                break;
            }
            if !out.contains(&j) {
                out.push(j);
            }
        }
    }
    out
}

/// `k` distinct feature indices drawn uniformly without replacement.
pub fn random_markers(d: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= K <= d, got K={k}, d={d}"
        )));
    }
    Ok(Rng::stream(seed, stream::RANDOM_MARKERS).sample_indices(d, k))
}

/// Randomness consumed by one training step, drawn outside the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    /// Gumbel draws, [`Selector::noise_rows`] x `d`.
    pub gumbel: Matrix,
    /// Standard normal draws for the latent reparameterization, `n x latent`.
    pub latent: Matrix,
}

/// Parameters registered on a tape, grouped by component.
#[derive(Clone, Debug)]
pub struct Bound {
    pub selector: Vec<Var>,
    pub classifier: Vec<Var>,
    pub encoder: Vec<Var>,
    pub decoder: Vec<Var>,
}

impl Bound {
    /// All parameters in [`MarkerModel::parameters_mut`] order.
    pub fn all(&self) -> Vec<Var> {
        [
            &self.selector,
            &self.classifier,
            &self.encoder,
            &self.decoder,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }

    pub fn groups(&self) -> [(&'static str, &[Var]); 4] {
        [
            ("selector", &self.selector),
            ("classifier", &self.classifier),
            ("encoder", &self.encoder),
            ("decoder", &self.decoder),
        ]
    }
}

/// Handles into a recorded forward pass.
#[derive(Debug)]
pub struct Forward {
    pub loss: Var,
    pub reconstruction: Option<Var>,
    pub classification: Option<Var>,
    /// The updated moving-average logits (instance selector only).
    pub aggregated_logits: Option<Var>,
    stats: ModelStats,
}

#[derive(Debug, Default)]
struct ModelStats {
    selector: Vec<Option<BatchStats>>,
    classifier: Vec<Option<BatchStats>>,
    encoder: Vec<Option<BatchStats>>,
    decoder: Vec<Option<BatchStats>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerModel {
    pub method: Method,
    pub alpha: f64,
    pub kl_weight: f64,
    pub class_loss: ClassLoss,
    pub selector: Selector,
    /// Absent when the training data has no classes.
    pub classifier: Option<Mlp>,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
    pub n_classes: usize,
    pub trained: bool,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: MarkerModel,
}

impl MarkerModel {
    /// Fresh model for `d` genes and `classes` classes (0 when unlabelled).
    pub fn new(method: Method, d: usize, classes: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let k = config.k;
        if k > d {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= K <= d, got K={k}, d={d}"
            )));
        }
        let alpha = config.alpha_for(method);
        if alpha < 1.0 && classes == 0 {
            return Err(Error::MissingLabels(
                "a classification objective needs labelled data",
            ));
        }
        let h = config.hidden;
        let mut rng = Rng::stream(config.seed, stream::INIT);
        let boost = |logits: &mut Matrix| -> Result<()> {
            for r in 0..logits.rows() {
                for &j in &config.prior_markers {
                    if j >= d {
                        return Err(Error::InvalidArgument(format!(
                            "prior marker {j} out of range"
                        )));
                    }
                    logits[(r, j)] += selector::PRIOR_BOOST;
                }
            }
            Ok(())
        };
        let selector = match method {
            Method::Supervised | Method::Unsupervised | Method::Joint => Selector::Instance {
                net: Mlp::new(&[d, h, h, d], Activation::Identity, &mut rng)?,
                state: SelectorState::new(d, k, config.beta)?.with_prior(&config.prior_markers)?,
            },
            Method::ConcreteVae => {
                let mut logits = Matrix::zeros(k, d);
                boost(&mut logits)?;
                Selector::Concrete { logits }
            }
            Method::GlobalGumbel => {
                let mut logits = Matrix::zeros(1, d);
                boost(&mut logits)?;
                Selector::GlobalGumbel { logits, k }
            }
        };
        let classifier = if classes > 0 {
            Some(Mlp::new(&[k, h, classes], Activation::Softmax, &mut rng)?)
        } else {
            None
        };
        let latent = config.latent;
        let encoder = Mlp::new(&[k, h, h, 2 * latent], Activation::Identity, &mut rng)?;
        let decoder = Mlp::new(&[latent, h, d], Activation::Identity, &mut rng)?;
        Ok(Self {
            method,
            alpha,
            kl_weight: config.kl_weight,
            class_loss: config.class_loss,
            selector,
            classifier,
            encoder,
            decoder,
            latent_dim: latent,
            n_classes: classes,
            trained: false,
            config: config.clone(),
        })
    }

    pub fn n_genes(&self) -> usize {
        self.selector.dim()
    }

    pub fn k(&self) -> usize {
        self.selector.k()
    }

    pub fn uses_reconstruction(&self) -> bool {
        self.alpha > 0.0
    }

    pub fn uses_classification(&self) -> bool {
        self.alpha < 1.0
    }

    pub fn markers(&self) -> Vec<usize> {
        self.selector.markers()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.selector.parameters_mut();
        if let Some(c) = &mut self.classifier {
            out.extend(c.parameters_mut());
        }
        out.extend(self.encoder.parameters_mut());
        out.extend(self.decoder.parameters_mut());
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = self.selector.parameter_names();
        if let Some(c) = &self.classifier {
            out.extend(c.parameter_names("classifier"));
        }
        out.extend(self.encoder.parameter_names("encoder"));
        out.extend(self.decoder.parameter_names("decoder"));
        out
    }

    fn bind_with(&self, g: &mut Graph, leaf: fn(&mut Graph, Matrix) -> Var) -> Bound {
        let mut group = |ps: Vec<&Matrix>| {
            ps.into_iter()
                .map(|p| leaf(g, p.clone()))
                .collect::<Vec<_>>()
        };
        Bound {
            selector: group(self.selector.parameters()),
            classifier: group(
                self.classifier
                    .as_ref()
                    .map_or_else(Vec::new, Mlp::parameters),
            ),
            encoder: group(self.encoder.parameters()),
            decoder: group(self.decoder.parameters()),
        }
    }

    /// Register all parameters as differentiable leaves.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        self.bind_with(g, Graph::param)
    }

    /// Register all parameters as constants.
    pub fn bind_constants(&self, g: &mut Graph) -> Bound {
        self.bind_with(g, Graph::constant)
    }

    pub fn draw_noise(&self, rows: usize, rng: &mut Rng) -> StepNoise {
        let gumbel = selector::gumbel_noise(self.selector.noise_rows(), self.n_genes(), rng);
        let latent = Matrix::from_fn(rows, self.latent_dim, |_, _| rng.normal());
        StepNoise { gumbel, latent }
    }

    /// Record a training-step forward pass on `g`: selection, projection and
    /// the weighted loss.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: Var,
        labels: Option<&[usize]>,
        noise: &StepNoise,
        tau: f64,
        mode: Mode,
    ) -> Result<Forward> {
        if tau.is_nan() || tau <= 0.0 {
            return Err(Error::InvalidTemperature(tau));
        }
        let mut stats = ModelStats::default();
        let mut aggregated = None;
        let gamma = match &self.selector {
            Selector::Instance { net, state } => {
                let (batch_logits, s) =
                    selector::instance_logits_on(g, net, &bound.selector, x, mode)?;
                stats.selector = s;
                let logits = state.aggregate_on(g, batch_logits)?;
                aggregated = Some(logits);
                selector::relaxed_rows_shared(g, logits, &noise.gumbel, tau)?
            }
            Selector::Concrete { .. } => {
                selector::relaxed_rows_per_node(g, bound.selector[0], &noise.gumbel, tau)?
            }
            Selector::GlobalGumbel { k, .. } => {
                selector::relaxed_top_k(g, bound.selector[0], &noise.gumbel, *k, tau)?
            }
        };
        let mut fwd = self.loss_from_selection(g, bound, x, gamma, labels, &noise.latent, mode)?;
        fwd.aggregated_logits = aggregated;
        fwd.stats.selector = stats.selector;
        Ok(fwd)
    }

    /// Loss when shared selection logits are supplied directly as a `1 x d`
    /// node, bypassing the selector's own parameters. Differentiating this
    /// gives the gradient with respect to `log pi`.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_from_logits(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: Var,
        logits: Var,
        labels: Option<&[usize]>,
        noise: &StepNoise,
        tau: f64,
        mode: Mode,
    ) -> Result<Forward> {
        let gamma = selector::relaxed_rows_shared(g, logits, &noise.gumbel, tau)?;
        self.loss_from_selection(g, bound, x, gamma, labels, &noise.latent, mode)
    }

    /// Loss given a `K x d` selection matrix `gamma`.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_from_selection(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: Var,
        gamma: Var,
        labels: Option<&[usize]>,
        latent_noise: &Matrix,
        mode: Mode,
    ) -> Result<Forward> {
        let n = g.shape(x).0;
        let d = self.n_genes();
        let xs = selector::project(g, x, gamma)?;
        let mut stats = ModelStats::default();

        let reconstruction = if self.uses_reconstruction() {
            let enc = self.encoder.forward(g, &bound.encoder, xs, mode)?;
            stats.encoder = enc.stats;
            let l = self.latent_dim;
            let mu = g.slice_cols(enc.output, 0, l)?;
            let log_var = g.slice_cols(enc.output, l, 2 * l)?;
            if latent_noise.shape() != (n, l) {
                return Err(Error::ShapeMismatch {
                    op: "latent_noise",
                    left: (n, l),
                    right: latent_noise.shape(),
                });
            }
            let half = g.scale(log_var, 0.5)?;
            let sigma = g.exp(half)?;
            let eps = g.constant(latent_noise.clone());
            let spread = g.mul(sigma, eps)?;
            let z = g.add(mu, spread)?;
            let dec = self.decoder.forward(g, &bound.decoder, z, mode)?;
            stats.decoder = dec.stats;
            let mse = g.mse(dec.output, x)?;
            let term = if self.kl_weight > 0.0 {
                let kl = g.gaussian_kl(mu, log_var)?;
                let kl = g.scale(kl, self.kl_weight / d as f64)?;
                g.add(mse, kl)?
            } else {
                mse
            };
            Some(term)
        } else {
            None
        };

        let classification = if self.uses_classification() {
            let labels = labels.ok_or(Error::MissingLabels("alpha < 1 needs class labels"))?;
            let net = self
                .classifier
                .as_ref()
                .ok_or(Error::MissingLabels("model was built without classes"))?;
            let out = net.forward(g, &bound.classifier, xs, mode)?;
            stats.classifier = out.stats;
            Some(match self.class_loss {
                ClassLoss::CrossEntropy => g.cross_entropy(out.logits, labels)?,
                ClassLoss::Mse => {
                    if let Some(&id) = labels.iter().find(|&&c| c >= self.n_classes) {
                        return Err(Error::ClassOutOfRange {
                            id,
                            classes: self.n_classes,
                        });
                    }
                    let onehot = g.constant(hard_selection(labels, self.n_classes));
                    g.mse(out.output, onehot)?
                }
            })
        } else {
            None
        };

        let loss = match (reconstruction, classification) {
            (Some(r), None) => r,
            (None, Some(c)) => c,
            (Some(r), Some(c)) => {
                let r = g.scale(r, self.alpha)?;
                let c = g.scale(c, 1.0 - self.alpha)?;
                g.add(r, c)?
            }
            (None, None) => unreachable!("alpha is either < 1 or > 0"),
        };
        Ok(Forward {
            loss,
            reconstruction,
            classification,
            aggregated_logits: None,
            stats,
        })
    }

    /// Fold a train-mode forward pass back into the model: batch-norm
    /// running statistics and the moving-average selection logits.
    pub fn commit(&mut self, g: &Graph, fwd: &Forward) {
        if let Selector::Instance { net, state } = &mut self.selector {
            net.commit(&fwd.stats.selector);
            if let Some(v) = fwd.aggregated_logits {
                state.logits = g.value(v).as_slice().to_vec();
            }
        }
        if let Some(c) = &mut self.classifier {
            c.commit(&fwd.stats.classifier);
        }
        self.encoder.commit(&fwd.stats.encoder);
        self.decoder.commit(&fwd.stats.decoder);
    }

    /// Deterministic objective on held-out cells: hard selection at the
    /// current markers, eval-mode batch norm and the latent mean.
    pub fn validation_loss(&self, x: &Matrix, labels: Option<&[usize]>) -> Result<f64> {
        if x.rows() == 0 {
            return Err(Error::InvalidArgument("empty validation set".into()));
        }
        let mut g = Graph::new();
        let bound = self.bind_constants(&mut g);
        let xv = g.constant(x.clone());
        let gamma = g.constant(hard_selection(&self.markers(), self.n_genes()));
        let zeros = Matrix::zeros(x.rows(), self.latent_dim);
        let fwd =
            self.loss_from_selection(&mut g, &bound, xv, gamma, labels, &zeros, Mode::Eval)?;
        Ok(g.value(fwd.loss).item())
    }

    /// Marker columns of full expression rows, in marker rank order.
    pub fn marker_values(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_genes() {
            return Err(Error::ShapeMismatch {
                op: "marker_values",
                left: x.shape(),
                right: (x.rows(), self.n_genes()),
            });
        }
        Ok(x.select_columns(&self.markers()))
    }

    /// Full `n x d` expression decoded from `n x K` marker values, using the
    /// latent mean.
    pub fn reconstruct(&self, marker_values: &Matrix) -> Result<Matrix> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        if !self.uses_reconstruction() {
            return Err(Error::Unsupported(format!(
                "{} model has no trained decoder",
                self.method
            )));
        }
        if marker_values.cols() != self.k() {
            return Err(Error::ShapeMismatch {
                op: "reconstruct",
                left: marker_values.shape(),
                right: (marker_values.rows(), self.k()),
            });
        }
        let enc = self.encoder.infer(marker_values)?;
        let mu = enc.select_columns(&(0..self.latent_dim).collect::<Vec<_>>());
        self.decoder.infer(&mu)
    }

    /// Class ids for full expression rows via the classifier on the hard
    /// marker panel.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        let net = match (&self.classifier, self.uses_classification()) {
            (Some(net), true) => net,
            _ => {
                return Err(Error::Unsupported(format!(
                    "{} model has no trained classifier",
                    self.method
                )))
            }
        };
        let probs = net.infer(&self.marker_values(x)?)?;
        Ok((0..probs.rows())
            .map(|i| extract_markers(probs.row(i), 1)[0])
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            format_version: FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "model format version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
