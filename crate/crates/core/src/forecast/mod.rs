//! Forecaster contract and the built-in models.
//!
//! A forecaster maps a `t × n` input window to a `horizon × n` prediction.
//! Built-ins range from parameter-free baselines to small gradient-trained
//! models; anything else plugs in through the external adapter protocol.

mod adam;
mod baseline;
mod dlinear;
mod linear;
mod mlp;
mod persist;
mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use adam::Adam;
pub use baseline::{GlobalMean, Persistence};
pub use dlinear::{decompose_moving_average, DLinear};
pub use linear::Linear;
pub use mlp::Mlp;
pub use persist::{load_model, save_model, ModelFile, MODEL_FORMAT_VERSION};
pub use train::{
    batch_loss_and_grad, train, validation_mse, EarlyStopping, EpochOutcome, TrainConfig, TrainSummary,
};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    DivergenceDetected { epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model {0:?} is not trainable")]
    NotTrainable(ModelKind),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("external adapter: {0}")]
    Adapter(#[from] crate::cli::AdapterError),
}

/// Window geometry a model is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub t: usize,
    pub horizon: usize,
    pub n: usize,
}

impl Dims {
    pub fn new(t: usize, horizon: usize, n: usize) -> Self {
        Self { t, horizon, n }
    }

    pub fn input_len(&self) -> usize {
        self.t * self.n
    }

    pub fn output_len(&self) -> usize {
        self.horizon * self.n
    }

    /// Checks a window against the fitted input shape.
    pub fn check_input(&self, x: &Matrix) -> Result<(), ForecastError> {
        if x.shape() != (self.t, self.n) {
            return Err(ForecastError::ShapeMismatch { expected: (self.t, self.n), got: x.shape() });
        }
        if !x.is_finite() {
            return Err(ForecastError::NonFiniteInput);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Persistence,
    GlobalMean,
    Linear,
    DLinear,
    #[serde(alias = "Mlp")]
    MLP,
    External,
}

impl ModelKind {
    pub fn is_trainable(self) -> bool {
        matches!(self, Self::Linear | Self::DLinear | Self::MLP)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub hidden_width: usize,
    pub moving_average_kernel: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self { hidden_width: 256, moving_average_kernel: 25 }
    }
}

pub trait Forecaster: Sync {
    fn name(&self) -> String;

    fn dims(&self) -> Dims;

    fn predict(&self, x: &Matrix) -> Result<Matrix, ForecastError>;

    /// Predictions for many windows, in input order.
    fn predict_batch(&self, xs: &[Matrix]) -> Result<Vec<Matrix>, ForecastError> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }
}

/// A model with a flat parameter vector and an analytic gradient of the
/// squared error.
pub trait Differentiable: Forecaster {
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Prediction without shape or finiteness checks.
    fn forward(&self, x: &Matrix) -> Matrix;

    /// Adds `scale · ∂/∂θ Σ (ŷ − y)²` for one window into `grad` and returns
    /// the window's sum of squared errors.
    fn accumulate_grad(&self, x: &Matrix, y: &Matrix, scale: f64, grad: &mut [f64]) -> f64;
}

/// Any built-in model.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinModel {
    Persistence(Persistence),
    GlobalMean(GlobalMean),
    Linear(Linear),
    DLinear(DLinear),
    Mlp(Mlp),
}

impl BuiltinModel {
    /// Freshly initialized model; `seed` drives weight initialization.
    pub fn new(kind: ModelKind, dims: Dims, hyper: &HyperParams, seed: u64) -> Result<Self, ForecastError> {
        Ok(match kind {
            ModelKind::Persistence => Self::Persistence(Persistence::new(dims)),
            ModelKind::GlobalMean => Self::GlobalMean(GlobalMean::standardized(dims)),
            ModelKind::Linear => Self::Linear(Linear::init(dims, seed)),
            ModelKind::DLinear => Self::DLinear(DLinear::init(dims, hyper.moving_average_kernel, seed)?),
            ModelKind::MLP => Self::Mlp(Mlp::init(dims, hyper.hidden_width, seed)?),
            ModelKind::External => {
                return Err(ForecastError::InvalidConfig("external models are not built in".into()))
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Persistence(_) => ModelKind::Persistence,
            Self::GlobalMean(_) => ModelKind::GlobalMean,
            Self::Linear(_) => ModelKind::Linear,
            Self::DLinear(_) => ModelKind::DLinear,
            Self::Mlp(_) => ModelKind::MLP,
        }
    }

    pub fn as_forecaster(&self) -> &dyn Forecaster {
        match self {
            Self::Persistence(m) => m,
            Self::GlobalMean(m) => m,
            Self::Linear(m) => m,
            Self::DLinear(m) => m,
            Self::Mlp(m) => m,
        }
    }

    pub fn as_differentiable_mut(&mut self) -> Option<&mut dyn Differentiable> {
        match self {
            Self::Linear(m) => Some(m),
            Self::DLinear(m) => Some(m),
            Self::Mlp(m) => Some(m),
            _ => None,
        }
    }
}

impl Forecaster for BuiltinModel {
    fn name(&self) -> String {
        self.as_forecaster().name()
    }

    fn dims(&self) -> Dims {
        self.as_forecaster().dims()
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix, ForecastError> {
        self.as_forecaster().predict(x)
    }

    fn predict_batch(&self, xs: &[Matrix]) -> Result<Vec<Matrix>, ForecastError> {
        self.as_forecaster().predict_batch(xs)
    }
}

/// Flattened input `x` (time-major) as a slice view.
pub(crate) fn flat(x: &Matrix) -> &[f64] {
    x.as_slice()
}

/// `out = W · v + b` where `W` is `rows × v.len()` row-major.
pub(crate) fn affine(weights: &[f64], bias: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, (row, b)) in out.iter_mut().zip(weights.chunks_exact(cols).zip(bias)) {
        *o = b + row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>();
    }
}

/// Uniform `(-1/√fan_in, 1/√fan_in)` initialization.
pub(crate) fn init_uniform(rng: &mut crate::rng::Stream, fan_in: usize, out: &mut [f64]) {
    use rand::Rng;
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for w in out {
        *w = rng.random_range(-bound..bound);
    }
}
