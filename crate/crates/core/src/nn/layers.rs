use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::kaiming_init;
use crate::rng::Rng;
use crate::tensor::{Graph, Matrix, Var};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Identity,
    Softmax,
}

/// Whether batch norm uses batch statistics (and updates running ones) or
/// the running statistics only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in x out`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Self {
            weight: kaiming_init(inputs, outputs, rng),
            bias: Matrix::zeros(1, outputs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub scale: Matrix,
    pub shift: Matrix,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            scale: Matrix::filled(1, features, 1.0),
            shift: Matrix::zeros(1, features),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    /// Normalize `x` (before scale/shift). In train mode with at least two
    /// rows this uses batch statistics and returns them; otherwise running
    /// statistics are applied as constants.
    fn normalize(&self, g: &mut Graph, x: Var, mode: Mode) -> Result<(Var, Option<BatchStats>)> {
        let rows = g.shape(x).0;
        if mode == Mode::Train && rows >= 2 {
            let (xhat, mean, var) = g.normalize_columns(x, self.eps)?;
            return Ok((xhat, Some(BatchStats { mean, var, rows })));
        }
        let neg_mean =
            Matrix::row_vector(&self.running_mean.iter().map(|m| -m).collect::<Vec<_>>())?;
        let inv_std = Matrix::row_vector(
            &self
                .running_var
                .iter()
                .map(|v| 1.0 / (v + self.eps).sqrt())
                .collect::<Vec<_>>(),
        )?;
        let neg_mean = g.constant(neg_mean);
        let inv_std = g.constant(inv_std);
        let centered = g.add_row(x, neg_mean)?;
        Ok((g.mul_row(centered, inv_std)?, None))
    }

    fn commit(&mut self, stats: &BatchStats) {
        let unbiased = stats.rows as f64 / (stats.rows as f64 - 1.0);
        let m = self.momentum;
        for (r, b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = (1.0 - m) * *r + m * b * unbiased;
        }
    }
}

/// Batch statistics observed during a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub dense: Dense,
    pub norm: Option<BatchNorm>,
    pub activation: Activation,
}

impl Layer {
    fn param_count(&self) -> usize {
        if self.norm.is_some() {
            4
        } else {
            2
        }
    }
}

/// Result of [`Mlp::forward`]. `logits` is the last layer before its output
/// activation; `stats` must be handed back to [`Mlp::commit`] to update the
/// running statistics.
#[derive(Debug)]
pub struct MlpOutput {
    pub output: Var,
    pub logits: Var,
    pub stats: Vec<Option<BatchStats>>,
}

/// Feed-forward stack. Hidden layers are `dense -> batch norm -> leaky ReLU`;
/// the last layer is `dense -> output activation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub leaky_slope: f64,
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`.
    pub fn new(sizes: &[usize], output: Activation, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "invalid layer sizes {sizes:?}"
            )));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                dense: Dense::new(w[0], w[1], rng),
                norm: (i < last).then(|| BatchNorm::new(w[1])),
                activation: if i < last {
                    Activation::LeakyRelu
                } else {
                    output
                },
            })
            .collect();
        Ok(Self {
            layers,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("empty network".into()));
        }
        for w in layers.windows(2) {
            if w[0].dense.weight.cols() != w[1].dense.weight.rows() {
                return Err(Error::ShapeMismatch {
                    op: "Mlp::from_layers",
                    left: w[0].dense.weight.shape(),
                    right: w[1].dense.weight.shape(),
                });
            }
        }
        Ok(Self {
            layers,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].dense.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.dense.weight.cols())
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.dense.weight);
            out.push(&l.dense.bias);
            if let Some(bn) = &l.norm {
                out.push(&bn.scale);
                out.push(&bn.shift);
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.dense.weight);
            out.push(&mut l.dense.bias);
            if let Some(bn) = &mut l.norm {
                out.push(&mut bn.scale);
                out.push(&mut bn.shift);
            }
        }
        out
    }

    pub fn parameter_names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(format!("{prefix}.{i}.weight"));
            out.push(format!("{prefix}.{i}.bias"));
            if l.norm.is_some() {
                out.push(format!("{prefix}.{i}.bn_scale"));
                out.push(format!("{prefix}.{i}.bn_shift"));
            }
        }
        out
    }

    /// Register every parameter on the tape, in [`Mlp::parameters`] order.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .map(|p| g.param(p.clone()))
            .collect()
    }

    pub fn forward(&self, g: &mut Graph, params: &[Var], x: Var, mode: Mode) -> Result<MlpOutput> {
        let expected: usize = self.layers.iter().map(Layer::param_count).sum();
        if params.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "expected {expected} bound parameters, got {}",
                params.len()
            )));
        }
        let (_, cols) = g.shape(x);
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "mlp_forward",
                left: g.shape(x),
                right: self.layers[0].dense.weight.shape(),
            });
        }
        let mut h = x;
        let mut logits = x;
        let mut stats = Vec::with_capacity(self.layers.len());
        let mut p = params.iter().copied();
        for layer in &self.layers {
            let w = p.next().unwrap();
            let b = p.next().unwrap();
            let z = g.matmul(h, w)?;
            let mut z = g.add_row(z, b)?;
            match &layer.norm {
                Some(bn) => {
                    let scale = p.next().unwrap();
                    let shift = p.next().unwrap();
                    let (xhat, s) = bn.normalize(g, z, mode)?;
                    let scaled = g.mul_row(xhat, scale)?;
                    z = g.add_row(scaled, shift)?;
                    stats.push(s);
                }
                None => stats.push(None),
            }
            logits = z;
            h = match layer.activation {
                Activation::LeakyRelu => g.leaky_relu(z, self.leaky_slope)?,
                Activation::Identity => z,
                Activation::Softmax => g.softmax_rows(z, 1.0)?,
            };
        }
        Ok(MlpOutput {
            output: h,
            logits,
            stats,
        })
    }

    /// Fold train-mode batch statistics into the running statistics.
    pub fn commit(&mut self, stats: &[Option<BatchStats>]) {
        for (layer, s) in self.layers.iter_mut().zip(stats) {
            if let (Some(bn), Some(s)) = (&mut layer.norm, s) {
                bn.commit(s);
            }
        }
    }

    /// Eval-mode forward pass outside any training graph.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let params: Vec<Var> = self
            .parameters()
            .into_iter()
            .map(|p| g.constant(p.clone()))
            .collect();
        let x = g.constant(x.clone());
        let out = self.forward(&mut g, &params, x, Mode::Eval)?;
        Ok(g.value(out.output).clone())
    }
}
