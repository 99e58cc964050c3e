use crate::error::{Error, Result};

pub const LR_GRID_MIN: f64 = 1e-8;
pub const LR_GRID_MAX: f64 = 1e-3;

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Outcome of a learning-rate search.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSearch {
    pub best: f64,
    /// `(rate, end-of-probe validation loss)`; `None` marks a diverged probe.
    pub probes: Vec<(f64, Option<f64>)>,
}

/// Run `probe` once per candidate rate and keep the rate with the lowest
/// returned validation loss. Ties go to the smaller rate.
pub fn lr_finder(grid: &[f64], mut probe: impl FnMut(f64) -> Result<f64>) -> Result<LrSearch> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty learning-rate grid".into()));
    }
    let tol = 1e-15;
    if let Some(bad) = grid
        .iter()
        .find(|&&r| !(LR_GRID_MIN - tol..=LR_GRID_MAX + tol).contains(&r))
    {
        return Err(Error::InvalidArgument(format!(
            "learning rate {bad} outside [{LR_GRID_MIN}, {LR_GRID_MAX}]"
        )));
    }
    let mut probes = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &rate in grid {
        let loss = match probe(rate) {
            Ok(l) if l.is_finite() => Some(l),
            Ok(_)
            | Err(Error::Diverged { .. } | Error::NonFinite(_) | Error::NonFiniteGradient(_)) => {
                None
            }
            Err(e) => return Err(e),
        };
        if let Some(l) = loss {
            let better = match best {
                None => true,
                Some((bl, br)) => l < bl || (l == bl && rate < br),
            };
            if better {
                best = Some((l, rate));
            }
        }
        probes.push((rate, loss));
    }
    let (_, best) = best.ok_or(Error::AllProbesDiverged)?;
    Ok(LrSearch { best, probes })
}

/// Patience-based stopping on a validation-loss stream with a minimum and a
/// maximum number of epochs. Epochs are counted from 1.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
    best: f64,
    stale: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_epochs: usize, max_epochs: usize) -> Self {
        Self {
            patience,
            min_epochs,
            max_epochs,
            best: f64::INFINITY,
            stale: 0,
            epoch: 0,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Epochs since the last strict improvement.
    pub fn stale(&self) -> usize {
        self.stale
    }

    /// Record one epoch's validation loss; `true` means stop now.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.epoch += 1;
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        if self.epoch >= self.max_epochs {
            return true;
        }
        self.epoch >= self.min_epochs && self.stale >= self.patience
    }
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self::new(3, 25, 100)
    }
}
