use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Adam, Differentiable, ForecastError};
use crate::matrix::Matrix;
use crate::pipeline::WindowSample;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Shuffling seed. Not part of the serialized form; runs set it from the run seed.
    #[serde(skip)]
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            patience: 5,
            max_epochs: 100,
            learning_rate: 1e-3,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch_size, patience and max_epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.adam_eps > 0.0) {
            return bad("learning_rate and adam_eps must be positive");
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochOutcome {
    Improved,
    NoImprovement,
    Stop,
}

/// Tracks the best validation loss; stops after `patience` consecutive
/// epochs without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> EpochOutcome {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            EpochOutcome::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                EpochOutcome::Stop
            } else {
                EpochOutcome::NoImprovement
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
}

/// Mean squared error over a batch and its gradient with respect to the
/// model parameters.
pub fn batch_loss_and_grad<M: Differentiable + ?Sized>(model: &M, batch: &[(&Matrix, &Matrix)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.params().len()];
    let (_, y0) = batch[0];
    let count = (batch.len() * y0.rows() * y0.cols()) as f64;
    let scale = 1.0 / count;
    let sse: f64 = batch.iter().map(|(x, y)| model.accumulate_grad(x, y, scale, &mut grad)).sum();
    (sse / count, grad)
}

pub fn validation_mse<M: Differentiable + ?Sized>(model: &M, windows: &[WindowSample]) -> f64 {
    let sum: f64 = windows
        .iter()
        .map(|w| {
            let p = model.forward(&w.x);
            let sse: f64 = p.as_slice().iter().zip(w.y.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
            sse / (w.y.rows() * w.y.cols()) as f64
        })
        .sum();
    sum / windows.len() as f64
}

/// Mini-batch Adam on the MSE with per-epoch validation and early stopping.
/// On return the model holds the best-validation checkpoint.
pub fn train<M: Differentiable + ?Sized>(
    model: &mut M,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<TrainSummary, ForecastError> {
    train_with_validator(model, train_windows, cfg, |m| validation_mse(m, val_windows), val_windows.is_empty())
}

pub(crate) fn train_with_validator<M: Differentiable + ?Sized>(
    model: &mut M,
    train_windows: &[WindowSample],
    cfg: &TrainConfig,
    mut validate: impl FnMut(&M) -> f64,
    no_validation: bool,
) -> Result<TrainSummary, ForecastError> {
    cfg.validate()?;
    if train_windows.is_empty() || no_validation {
        return Err(ForecastError::InvalidConfig("training and validation windows must be non-empty".into()));
    }
    let mut adam = Adam::new(model.params().len(), cfg.learning_rate, cfg.adam_betas, cfg.adam_eps);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params().to_vec();
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut summary = TrainSummary { epochs_run: 0, best_epoch: 0, best_val_mse: f64::INFINITY, train_mse: Vec::new(), val_mse: Vec::new() };

    for epoch in 1..=cfg.max_epochs {
        let mut rng = rng::stream(cfg.seed, &format!("shuffle/{epoch}"));
        order.shuffle(&mut rng);
        let mut epoch_sse = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&Matrix, &Matrix)> =
                chunk.iter().map(|&i| (&train_windows[i].x, &train_windows[i].y)).collect();
            let (loss, grad) = batch_loss_and_grad(model, &batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ForecastError::DivergenceDetected { epoch, batch: b + 1 });
            }
            epoch_sse += loss * chunk.len() as f64;
            adam.step(model.params_mut(), &grad);
        }
        let val = validate(model);
        if !val.is_finite() {
            return Err(ForecastError::DivergenceDetected { epoch, batch: 0 });
        }
        summary.epochs_run = epoch;
        summary.train_mse.push(epoch_sse / train_windows.len() as f64);
        summary.val_mse.push(val);
        match stopper.observe(epoch, val) {
            EpochOutcome::Improved => best_params.copy_from_slice(model.params()),
            EpochOutcome::NoImprovement => {}
            EpochOutcome::Stop => break,
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    summary.best_epoch = stopper.best_epoch();
    summary.best_val_mse = stopper.best();
    Ok(summary)
}
