use super::{init_uniform, Differentiable, Dims, ForecastError, Forecaster};
use crate::matrix::Matrix;
use crate::rng;

/// Moving-average trend with edge-replication padding, and the remainder
/// `x − trend`. `kernel` must be odd.
pub fn decompose_moving_average(x: &Matrix, kernel: usize) -> (Matrix, Matrix) {
    assert!(kernel % 2 == 1, "moving-average kernel must be odd, got {kernel}");
    let (t, n) = x.shape();
    let half = (kernel - 1) / 2;
    let mut trend = Matrix::zeros(t, n);
    for j in 0..n {
        for i in 0..t {
            let mut acc = 0.0;
            for d in 0..kernel {
                let src = (i + d).saturating_sub(half).min(t - 1);
                acc += x[(src, j)];
            }
            trend[(i, j)] = acc / kernel as f64;
        }
    }
    let mut remainder = x.clone();
    for (r, tr) in remainder.as_mut_slice().iter_mut().zip(trend.as_slice()) {
        *r -= tr;
    }
    (trend, remainder)
}

/// Trend/remainder decomposition followed by one time-axis affine map per
/// component, shared across sensors; the two outputs are summed.
///
/// Parameter layout: trend weights `[horizon × t]`, trend bias `[horizon]`,
/// remainder weights `[horizon × t]`, remainder bias `[horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DLinear {
    dims: Dims,
    kernel: usize,
    params: Vec<f64>,
}

impl DLinear {
    pub fn init(dims: Dims, kernel: usize, seed: u64) -> Result<Self, ForecastError> {
        Self::check_kernel(kernel)?;
        let mut params = vec![0.0; Self::param_count(dims)];
        let mut rng = rng::stream(seed, "init/DLinear");
        init_uniform(&mut rng, dims.t, &mut params);
        Ok(Self { dims, kernel, params })
    }

    pub fn from_params(dims: Dims, kernel: usize, params: Vec<f64>) -> Result<Self, ForecastError> {
        Self::check_kernel(kernel)?;
        if params.len() != Self::param_count(dims) {
            return Err(ForecastError::ModelFile(format!(
                "DLinear expects {} parameters, found {}",
                Self::param_count(dims),
                params.len()
            )));
        }
        Ok(Self { dims, kernel, params })
    }

    fn check_kernel(kernel: usize) -> Result<(), ForecastError> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(ForecastError::InvalidConfig(format!("moving-average kernel must be odd and >= 1, got {kernel}")));
        }
        Ok(())
    }

    pub fn param_count(dims: Dims) -> usize {
        2 * (dims.horizon * dims.t + dims.horizon)
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn block(&self) -> usize {
        self.dims.horizon * self.dims.t + self.dims.horizon
    }

    /// (weights, bias) of branch 0 (trend) or 1 (remainder).
    fn branch(&self, b: usize) -> (&[f64], &[f64]) {
        let block = &self.params[b * self.block()..(b + 1) * self.block()];
        block.split_at(self.dims.horizon * self.dims.t)
    }
}

impl Forecaster for DLinear {
    fn name(&self) -> String {
        "DLinear".into()
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix, ForecastError> {
        self.dims.check_input(x)?;
        Ok(self.forward(x))
    }
}

impl Differentiable for DLinear {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let Dims { t, horizon, n } = self.dims;
        let (trend, remainder) = decompose_moving_average(x, self.kernel);
        let mut out = Matrix::zeros(horizon, n);
        for (b, comp) in [&trend, &remainder].into_iter().enumerate() {
            let (w, bias) = self.branch(b);
            for o in 0..horizon {
                let row = &w[o * t..(o + 1) * t];
                for j in 0..n {
                    let mut acc = bias[o];
                    for (i, wi) in row.iter().enumerate() {
                        acc += wi * comp[(i, j)];
                    }
                    out[(o, j)] += acc;
                }
            }
        }
        out
    }

    fn accumulate_grad(&self, x: &Matrix, y: &Matrix, scale: f64, grad: &mut [f64]) -> f64 {
        let Dims { t, horizon, n } = self.dims;
        let (trend, remainder) = decompose_moving_average(x, self.kernel);
        let pred = self.forward(x);
        let mut sse = 0.0;
        let mut g_out = Matrix::zeros(horizon, n);
        for ((g, p), target) in g_out.as_mut_slice().iter_mut().zip(pred.as_slice()).zip(y.as_slice()) {
            let diff = p - target;
            sse += diff * diff;
            *g = 2.0 * scale * diff;
        }
        let block = self.block();
        for (b, comp) in [&trend, &remainder].into_iter().enumerate() {
            let (gw, gb) = grad[b * block..(b + 1) * block].split_at_mut(horizon * t);
            for o in 0..horizon {
                for j in 0..n {
                    let g = g_out[(o, j)];
                    gb[o] += g;
                    for i in 0..t {
                        gw[o * t + i] += g * comp[(i, j)];
                    }
                }
            }
        }
        sse
    }
}
