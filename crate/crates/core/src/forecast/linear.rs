use super::{affine, flat, init_uniform, Differentiable, Dims, ForecastError, Forecaster};
use crate::matrix::Matrix;
use crate::rng;

/// One affine map from the flattened window (`t·n`) to the flattened
/// forecast (`horizon·n`).
///
/// Parameter layout: weights `[horizon·n × t·n]` row-major, then bias `[horizon·n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    dims: Dims,
    params: Vec<f64>,
}

impl Linear {
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut params = vec![0.0; Self::param_count(dims)];
        let mut rng = rng::stream(seed, "init/Linear");
        init_uniform(&mut rng, dims.input_len(), &mut params);
        Self { dims, params }
    }

    pub fn from_params(dims: Dims, params: Vec<f64>) -> Result<Self, ForecastError> {
        if params.len() != Self::param_count(dims) {
            return Err(ForecastError::ModelFile(format!(
                "Linear expects {} parameters, found {}",
                Self::param_count(dims),
                params.len()
            )));
        }
        Ok(Self { dims, params })
    }

    pub fn param_count(dims: Dims) -> usize {
        dims.output_len() * dims.input_len() + dims.output_len()
    }

    fn split(&self) -> (&[f64], &[f64]) {
        self.params.split_at(self.dims.output_len() * self.dims.input_len())
    }
}

impl Forecaster for Linear {
    fn name(&self) -> String {
        "Linear".into()
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix, ForecastError> {
        self.dims.check_input(x)?;
        Ok(self.forward(x))
    }
}

impl Differentiable for Linear {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let (w, b) = self.split();
        let mut out = Matrix::zeros(self.dims.horizon, self.dims.n);
        affine(w, b, flat(x), out.as_mut_slice());
        out
    }

    fn accumulate_grad(&self, x: &Matrix, y: &Matrix, scale: f64, grad: &mut [f64]) -> f64 {
        let pred = self.forward(x);
        let input = flat(x);
        let cols = input.len();
        let (gw, gb) = grad.split_at_mut(self.dims.output_len() * cols);
        let mut sse = 0.0;
        for (o, (p, t)) in pred.as_slice().iter().zip(y.as_slice()).enumerate() {
            let diff = p - t;
            sse += diff * diff;
            let g = 2.0 * scale * diff;
            gb[o] += g;
            for (gw, xi) in gw[o * cols..(o + 1) * cols].iter_mut().zip(input) {
                *gw += g * xi;
            }
        }
        sse
    }
}
