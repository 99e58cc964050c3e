use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{MarkerModel, StepNoise};
use crate::error::{Error, Result};
use crate::nn::{
    linear_grid, lr_finder, Adam, AdamConfig, EarlyStopping, Mode, LR_GRID_MAX, LR_GRID_MIN,
};
use crate::rng::{stream, Rng};
use crate::tensor::{Graph, Matrix};

/// One learning-rate probe; `loss` is `None` when the probe diverged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrProbe {
    pub rate: f64,
    pub loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub learning_rate: f64,
    pub lr_probes: Vec<LrProbe>,
    /// Number of epochs run (1-based index of the last epoch).
    pub stop_epoch: usize,
    pub markers: Vec<usize>,
    pub wall_time_secs: f64,
}

/// What the training loop exposes after each backward pass.
#[derive(Clone, Debug)]
pub struct StepInfo {
    /// 0-based.
    pub epoch: usize,
    /// 0-based within the epoch.
    pub batch: usize,
    pub tau: f64,
    pub loss: f64,
    /// Largest absolute gradient entry per component.
    pub grad_max_abs: [(&'static str, f64); 4],
}

struct EpochCtx<'a> {
    x: &'a Matrix,
    labels: Option<&'a [usize]>,
    epoch: usize,
    tau: f64,
    learning_rate: f64,
}

impl MarkerModel {
    /// Train on `train`, early-stopping on `val`. Without a fixed learning
    /// rate in the config, each candidate of a linear grid over
    /// `[1e-8, 1e-3]` is tried for one epoch on a copy of the untrained model
    /// and the rate with the lowest validation loss is kept.
    pub fn fit(
        &mut self,
        train: (&Matrix, Option<&[usize]>),
        val: (&Matrix, Option<&[usize]>),
    ) -> Result<TrainReport> {
        self.fit_observed(train, val, &mut |_| {})
    }

    pub fn fit_observed(
        &mut self,
        train: (&Matrix, Option<&[usize]>),
        val: (&Matrix, Option<&[usize]>),
        observer: &mut dyn FnMut(&StepInfo),
    ) -> Result<TrainReport> {
        let start = Instant::now();
        let config = self.config.clone();
        config.validate()?;
        self.check_split(train, "train")?;
        self.check_split(val, "validation")?;
        let schedule = config.schedule()?;
        let tau0 = schedule.at(0);

        let (learning_rate, lr_probes) = match config.learning_rate {
            Some(lr) => (lr, Vec::new()),
            None => {
                let grid = linear_grid(LR_GRID_MIN, LR_GRID_MAX, config.lr_grid_points);
                let mut index = 0u64;
                let search = lr_finder(&grid, |rate| {
                    let mut probe = self.clone();
                    let mut rng = Rng::stream(config.seed, stream::LR_PROBE + index);
                    index += 1;
                    let mut adam = Adam::new(AdamConfig::with_learning_rate(rate));
                    let ctx = EpochCtx {
                        x: train.0,
                        labels: train.1,
                        epoch: 0,
                        tau: tau0,
                        learning_rate: rate,
                    };
                    probe.run_epoch(&ctx, &mut adam, &mut rng, &mut |_| {})?;
                    probe.validation_loss(val.0, val.1)
                })?;
                let probes = search
                    .probes
                    .iter()
                    .map(|&(rate, loss)| LrProbe { rate, loss })
                    .collect();
                (search.best, probes)
            }
        };

        let mut rng = Rng::stream(config.seed, stream::TRAIN);
        let mut adam = Adam::new(AdamConfig::with_learning_rate(learning_rate));
        let mut stopper =
            EarlyStopping::new(config.patience, config.earliest_stop(), config.max_epochs);
        let mut report = TrainReport {
            train_losses: Vec::new(),
            validation_losses: Vec::new(),
            temperatures: Vec::new(),
            learning_rate,
            lr_probes,
            stop_epoch: 0,
            markers: Vec::new(),
            wall_time_secs: 0.0,
        };
        for epoch in 0..config.max_epochs {
            let tau = schedule.at(epoch);
            let ctx = EpochCtx {
                x: train.0,
                labels: train.1,
                epoch,
                tau,
                learning_rate,
            };
            let train_loss = self.run_epoch(&ctx, &mut adam, &mut rng, observer)?;
            let val_loss = self.validation_loss(val.0, val.1)?;
            if !val_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: 0,
                    tau,
                    learning_rate,
                    detail: "non-finite validation loss".into(),
                });
            }
            report.train_losses.push(train_loss);
            report.validation_losses.push(val_loss);
            report.temperatures.push(tau);
            log::debug!("epoch {epoch}: tau={tau:.4} train={train_loss:.6} val={val_loss:.6}");
            if stopper.observe(val_loss) {
                break;
            }
        }
        self.trained = true;
        report.stop_epoch = stopper.epoch();
        report.markers = self.markers();
        report.wall_time_secs = start.elapsed().as_secs_f64();
        Ok(report)
    }

    fn check_split(&self, (x, labels): (&Matrix, Option<&[usize]>), name: &str) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::InvalidArgument(format!("{name} split is empty")));
        }
        if x.cols() != self.n_genes() {
            return Err(Error::ShapeMismatch {
                op: "fit",
                left: x.shape(),
                right: (x.rows(), self.n_genes()),
            });
        }
        if self.uses_classification() {
            let labels = labels.ok_or(Error::MissingLabels("alpha < 1 needs class labels"))?;
            if labels.len() != x.rows() {
                return Err(Error::InvalidArgument(format!(
                    "{name} labels do not match rows"
                )));
            }
            if let Some(&id) = labels.iter().find(|&&c| c >= self.n_classes) {
                return Err(Error::ClassOutOfRange {
                    id,
                    classes: self.n_classes,
                });
            }
        }
        Ok(())
    }

    /// One pass over shuffled mini-batches; returns the row-weighted mean
    /// training loss.
    fn run_epoch(
        &mut self,
        ctx: &EpochCtx<'_>,
        adam: &mut Adam,
        rng: &mut Rng,
        observer: &mut dyn FnMut(&StepInfo),
    ) -> Result<f64> {
        let n = ctx.x.rows();
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let names = self.parameter_names();
        let mut total = 0.0;
        for (batch, rows) in order.chunks(self.config.batch_size).enumerate() {
            let diverged = |detail: String| Error::Diverged {
                epoch: ctx.epoch,
                batch,
                tau: ctx.tau,
                learning_rate: ctx.learning_rate,
                detail,
            };
            let guard = |e: Error| match e {
                Error::NonFinite(_) | Error::NonFiniteGradient(_) => diverged(e.to_string()),
                other => other,
            };
            let xb = ctx.x.select_rows(rows);
            let yb: Option<Vec<usize>> = ctx.labels.map(|l| rows.iter().map(|&i| l[i]).collect());
            let noise: StepNoise = self.draw_noise(rows.len(), rng);

            let mut g = Graph::new();
            let bound = self.bind(&mut g);
            let xv = g.constant(xb);
            let fwd = self
                .forward(
                    &mut g,
                    &bound,
                    xv,
                    yb.as_deref(),
                    &noise,
                    ctx.tau,
                    Mode::Train,
                )
                .map_err(guard)?;
            let loss = g.value(fwd.loss).item();
            if !loss.is_finite() {
                return Err(diverged(format!("loss is {loss}")));
            }
            g.backward(fwd.loss).map_err(guard)?;

            let grad_max_abs = bound.groups().map(|(name, vars)| {
                (
                    name,
                    vars.iter()
                        .map(|&v| g.grad(v).max_abs())
                        .fold(0.0, f64::max),
                )
            });
            observer(&StepInfo {
                epoch: ctx.epoch,
                batch,
                tau: ctx.tau,
                loss,
                grad_max_abs,
            });
            let grads: Vec<Matrix> = bound.all().into_iter().map(|v| g.grad(v)).collect();
            adam.step(&mut self.parameters_mut(), &grads, &names)
                .map_err(guard)?;
            self.commit(&g, &fwd);
            total += loss * rows.len() as f64;
        }
        Ok(total / n as f64)
    }
}
