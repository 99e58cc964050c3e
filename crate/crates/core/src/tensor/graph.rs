//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and [`Graph::backward`] is a single reverse sweep.
//! A fresh graph is built for every training step.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var, f64),
    MeanRows(Var),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    Normalize {
        input: Var,
        inv_std: Vec<f64>,
    },
    Mse(Var, Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
    GaussianKl(Var, Var),
    Sum(Var),
    Mean(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::MeanRows(..) => "mean_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::Normalize { .. } => "normalize",
            Op::Mse(..) => "mse",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::GaussianKl(..) => "gaussian_kl",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::Mse(a, b)
            | Op::GaussianKl(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::LeakyRelu(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::SoftmaxRows(a, _)
            | Op::MeanRows(a)
            | Op::SliceCols(a, _)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::Normalize { input, .. } => vec![*input],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::ConcatRows(parts) => parts.clone(),
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf (a parameter or an input whose gradient is wanted).
    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            grad: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of `v` (zeros if nothing reached it).
    pub fn grad(&self, v: Var) -> Matrix {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            grad: None,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        self.value(a).check_same_shape(self.value(b), op)
    }

    fn row_operand(&self, a: Var, row: Var, op: &'static str) -> Result<()> {
        let (ar, ac) = self.shape(a);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != ac {
            return Err(Error::ShapeMismatch {
                op,
                left: (ar, ac),
                right: (rr, rc),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), value)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push(Op::Transpose(a), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), value)
    }

    /// `a + row`, broadcasting a `1 x c` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand(a, row, "add_row")?;
        let r = self.value(row).as_slice().to_vec();
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(&r) {
                *v += b;
            }
        }
        self.push(Op::AddRow(a, row), value)
    }

    /// `a * row` element-wise, broadcasting a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand(a, row, "mul_row")?;
        let r = self.value(row).as_slice().to_vec();
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(&r) {
                *v *= b;
            }
        }
        self.push(Op::MulRow(a, row), value)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).scale(s);
        self.push(Op::Scale(a, s), value)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v + s);
        self.push(Op::AddScalar(a), value)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(Op::LeakyRelu(a, slope), value)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), value)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let input = self.value(a);
        if let Some((index, &value)) = input
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| **v <= 0.0)
        {
            return Err(Error::NonPositiveLog { index, value });
        }
        let value = input.map(f64::ln);
        self.push(Op::Log(a), value)
    }

    /// Row-wise `softmax(a / temperature)`, stabilized by max subtraction.
    pub fn softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        let value = softmax_rows(self.value(a), temperature)?;
        self.push(Op::SoftmaxRows(a, temperature), value)
    }

    /// Column means, `n x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        if self.shape(a).0 == 0 {
            return Err(Error::InvalidArgument("mean_rows of empty matrix".into()));
        }
        let value = self.value(a).column_means();
        self.push(Op::MeanRows(a), value)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let m = self.value(a);
        if start > end || end > m.cols() {
            return Err(Error::InvalidArgument(format!(
                "column slice {start}..{end} out of range for {} columns",
                m.cols()
            )));
        }
        let value = Matrix::from_fn(m.rows(), end - start, |i, j| m[(i, start + j)]);
        self.push(Op::SliceCols(a, start), value)
    }

    /// Stack matrices vertically; all parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|p| self.shape(*p).1)
            .ok_or_else(|| Error::InvalidArgument("concat_rows of nothing".into()))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            if m.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(parts[0]),
                    right: m.shape(),
                });
            }
            rows += m.rows();
            data.extend_from_slice(m.as_slice());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        self.push(Op::ConcatRows(parts.to_vec()), value)
    }

    /// Per-column standardization with batch statistics,
    /// `(x - mean) / sqrt(var + eps)` using the population variance.
    /// Returns the normalized node plus the batch mean and variance.
    pub fn normalize_columns(&mut self, a: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let x = self.value(a);
        let mean = x.column_means().into_vec();
        let var = x.column_variances();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut value = x.clone();
        for i in 0..value.rows() {
            for ((v, m), s) in value.row_mut(i).iter_mut().zip(&mean).zip(&inv_std) {
                *v = (*v - m) * s;
            }
        }
        let var_out = self.push(Op::Normalize { input: a, inv_std }, value)?;
        Ok((var_out, mean, var))
    }

    /// Mean squared deviation over all entries.
    pub fn mse(&mut self, prediction: Var, target: Var) -> Result<Var> {
        self.same_shape(prediction, target, "mse")?;
        let p = self.value(prediction);
        let t = self.value(target);
        let n = p.len() as f64;
        let s: f64 = p
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.push(Op::Mse(prediction, target), Matrix::scalar(s / n))
    }

    /// Mean over rows of `-ln softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let z = self.value(logits);
        if targets.len() != z.rows() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: z.shape(),
                right: (targets.len(), 1),
            });
        }
        if let Some(&id) = targets.iter().find(|&&t| t >= z.cols()) {
            return Err(Error::ClassOutOfRange {
                id,
                classes: z.cols(),
            });
        }
        let probs = softmax_rows(z, 1.0)?;
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = z.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        let value = Matrix::scalar(loss / targets.len() as f64);
        self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            value,
        )
    }

    /// KL divergence of `N(mean, exp(log_var))` from the unit Gaussian,
    /// `0.5 * mean_over_rows( sum_j (mu^2 + sigma^2 - log sigma^2 - 1) )`.
    pub fn gaussian_kl(&mut self, mean: Var, log_var: Var) -> Result<Var> {
        self.same_shape(mean, log_var, "gaussian_kl")?;
        let mu = self.value(mean);
        let lv = self.value(log_var);
        let n = mu.rows() as f64;
        let s: f64 = mu
            .as_slice()
            .iter()
            .zip(lv.as_slice())
            .map(|(m, l)| m * m + l.exp() - l - 1.0)
            .sum();
        self.push(Op::GaussianKl(mean, log_var), Matrix::scalar(0.5 * s / n))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(Op::Sum(a), value)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::scalar(self.value(a).mean());
        self.push(Op::Mean(a), value)
    }

    /// Reverse sweep from a scalar root. Gradients are added to each node's
    /// accumulator; call [`Graph::zero_grad`] between steps.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.shape(root);
        if shape != (1, 1) {
            return Err(Error::NonScalarRoot(shape));
        }
        let mut adj: Vec<Option<Matrix>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(Matrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj)?;
            match &mut self.nodes[i].grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) -> Result<()> {
        let out = &self.nodes[i].value;
        let mut send = |v: Var, m: Matrix| match &mut adj[v.0] {
            Some(acc) => acc.add_assign(&m),
            slot @ None => *slot = Some(m),
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    send(*a, g.matmul_t(self.value(*b))?);
                }
                if self.wants(*b) {
                    send(*b, self.value(*a).t_matmul(g)?);
                }
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Add(a, b) => {
                if self.wants(*a) {
                    send(*a, g.clone());
                }
                if self.wants(*b) {
                    send(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    send(*a, g.clone());
                }
                if self.wants(*b) {
                    send(*b, g.scale(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    send(*a, g.zip_map(self.value(*b), "mul", |x, y| x * y)?);
                }
                if self.wants(*b) {
                    send(*b, g.zip_map(self.value(*a), "mul", |x, y| x * y)?);
                }
            }
            Op::AddRow(a, r) => {
                if self.wants(*a) {
                    send(*a, g.clone());
                }
                if self.wants(*r) {
                    send(*r, column_sums(g));
                }
            }
            Op::MulRow(a, r) => {
                let row = self.value(*r).as_slice();
                if self.wants(*a) {
                    let mut ga = g.clone();
                    for k in 0..ga.rows() {
                        for (v, s) in ga.row_mut(k).iter_mut().zip(row) {
                            *v *= s;
                        }
                    }
                    send(*a, ga);
                }
                if self.wants(*r) {
                    send(
                        *r,
                        column_sums(&g.zip_map(self.value(*a), "mul_row", |x, y| x * y)?),
                    );
                }
            }
            Op::Scale(a, s) => send(*a, g.scale(*s)),
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::LeakyRelu(a, slope) => {
                let ga = g.zip_map(self.value(*a), "leaky_relu", |gv, x| {
                    if x > 0.0 {
                        gv
                    } else {
                        gv * slope
                    }
                })?;
                send(*a, ga);
            }
            Op::Exp(a) => send(*a, g.zip_map(out, "exp", |x, y| x * y)?),
            Op::Log(a) => send(*a, g.zip_map(self.value(*a), "log", |x, y| x / y)?),
            Op::SoftmaxRows(a, t) => {
                let mut ga = Matrix::zeros(out.rows(), out.cols());
                for k in 0..out.rows() {
                    let y = out.row(k);
                    let gr = g.row(k);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, yv), gv) in ga.row_mut(k).iter_mut().zip(y).zip(gr) {
                        *o = yv * (gv - dot) / t;
                    }
                }
                send(*a, ga);
            }
            Op::MeanRows(a) => {
                let (n, c) = self.shape(*a);
                let inv = 1.0 / n as f64;
                send(*a, Matrix::from_fn(n, c, |_, j| g[(0, j)] * inv));
            }
            Op::SliceCols(a, start) => {
                let (n, c) = self.shape(*a);
                let mut ga = Matrix::zeros(n, c);
                for k in 0..n {
                    ga.row_mut(k)[*start..*start + g.cols()].copy_from_slice(g.row(k));
                }
                send(*a, ga);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (r, c) = self.shape(*p);
                    if self.wants(*p) {
                        let slice = g.as_slice()[offset * c..(offset + r) * c].to_vec();
                        send(*p, Matrix::from_vec(r, c, slice)?);
                    }
                    offset += r;
                }
            }
            Op::Normalize { input, inv_std } => {
                // dx = inv_std * (g - mean(g) - xhat * mean(g * xhat))
                let (n, c) = out.shape();
                let nf = n as f64;
                let mut mean_g = vec![0.0; c];
                let mut mean_gx = vec![0.0; c];
                for k in 0..n {
                    for j in 0..c {
                        mean_g[j] += g[(k, j)] / nf;
                        mean_gx[j] += g[(k, j)] * out[(k, j)] / nf;
                    }
                }
                let ga = Matrix::from_fn(n, c, |k, j| {
                    inv_std[j] * (g[(k, j)] - mean_g[j] - out[(k, j)] * mean_gx[j])
                });
                send(*input, ga);
            }
            Op::Mse(p, t) => {
                let scale = 2.0 * g.item() / self.value(*p).len() as f64;
                let diff = self
                    .value(*p)
                    .zip_map(self.value(*t), "mse", |a, b| (a - b) * scale)?;
                if self.wants(*t) {
                    send(*t, diff.scale(-1.0));
                }
                if self.wants(*p) {
                    send(*p, diff);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = g.item() / targets.len() as f64;
                let mut ga = probs.scale(scale);
                for (k, &t) in targets.iter().enumerate() {
                    ga[(k, t)] -= scale;
                }
                send(*logits, ga);
            }
            Op::GaussianKl(m, lv) => {
                let n = self.shape(*m).0 as f64;
                let s = g.item() / n;
                if self.wants(*m) {
                    send(*m, self.value(*m).scale(s));
                }
                if self.wants(*lv) {
                    send(*lv, self.value(*lv).map(|l| 0.5 * s * (l.exp() - 1.0)));
                }
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                send(*a, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                send(*a, Matrix::filled(r, c, g.item() / (r * c) as f64));
            }
        }
        Ok(())
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for k in 0..m.rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(m.row(k)) {
            *o += v;
        }
    }
    out
}

/// Row-wise `softmax(a / temperature)` on a plain matrix.
pub fn softmax_rows(a: &Matrix, temperature: f64) -> Result<Matrix> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidTemperature(temperature));
    }
    let mut out = a.clone();
    for k in 0..out.rows() {
        let row = out.row_mut(k);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = ((*v - max) / temperature).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}
