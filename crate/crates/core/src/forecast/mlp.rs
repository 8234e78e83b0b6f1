use super::{affine, flat, init_uniform, Differentiable, Dims, ForecastError, Forecaster};
use crate::matrix::Matrix;
use crate::rng;

/// Flattened window → one ReLU hidden layer → flattened forecast.
/// No batch normalization.
///
/// Parameter layout: `W1 [hidden × t·n]`, `b1 [hidden]`, `W2 [horizon·n × hidden]`, `b2 [horizon·n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Dims,
    hidden: usize,
    params: Vec<f64>,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
}

impl Mlp {
    pub fn init(dims: Dims, hidden: usize, seed: u64) -> Result<Self, ForecastError> {
        if hidden == 0 {
            return Err(ForecastError::InvalidConfig("hidden_width must be positive".into()));
        }
        let mut params = vec![0.0; Self::param_count(dims, hidden)];
        let mut rng = rng::stream(seed, "init/MLP");
        let l = Self::layout(dims, hidden);
        init_uniform(&mut rng, dims.input_len(), &mut params[..l.w2]);
        init_uniform(&mut rng, hidden, &mut params[l.w2..]);
        Ok(Self { dims, hidden, params })
    }

    pub fn from_params(dims: Dims, hidden: usize, params: Vec<f64>) -> Result<Self, ForecastError> {
        if hidden == 0 || params.len() != Self::param_count(dims, hidden) {
            return Err(ForecastError::ModelFile(format!(
                "MLP expects {} parameters, found {}",
                Self::param_count(dims, hidden),
                params.len()
            )));
        }
        Ok(Self { dims, hidden, params })
    }

    pub fn param_count(dims: Dims, hidden: usize) -> usize {
        hidden * dims.input_len() + hidden + dims.output_len() * hidden + dims.output_len()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    fn layout(dims: Dims, hidden: usize) -> Layout {
        let w1 = hidden * dims.input_len();
        let b1 = w1 + hidden;
        let w2 = b1;
        Layout { w1, b1, w2 }
    }

    /// Pre-activation hidden values.
    fn hidden_pre(&self, x: &Matrix) -> Vec<f64> {
        let l = Self::layout(self.dims, self.hidden);
        let mut h = vec![0.0; self.hidden];
        affine(&self.params[..l.w1], &self.params[l.w1..l.b1], flat(x), &mut h);
        h
    }

    fn output(&self, hidden: &[f64]) -> Matrix {
        let l = Self::layout(self.dims, self.hidden);
        let w2_end = l.w2 + self.dims.output_len() * self.hidden;
        let mut out = Matrix::zeros(self.dims.horizon, self.dims.n);
        affine(&self.params[l.w2..w2_end], &self.params[w2_end..], hidden, out.as_mut_slice());
        out
    }
}

impl Forecaster for Mlp {
    fn name(&self) -> String {
        "MLP".into()
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix, ForecastError> {
        self.dims.check_input(x)?;
        Ok(self.forward(x))
    }
}

impl Differentiable for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let h: Vec<f64> = self.hidden_pre(x).into_iter().map(|v| v.max(0.0)).collect();
        self.output(&h)
    }

    fn accumulate_grad(&self, x: &Matrix, y: &Matrix, scale: f64, grad: &mut [f64]) -> f64 {
        let l = Self::layout(self.dims, self.hidden);
        let out_len = self.dims.output_len();
        let w2_end = l.w2 + out_len * self.hidden;
        let pre = self.hidden_pre(x);
        let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let pred = self.output(&act);

        let w2 = &self.params[l.w2..w2_end];
        let mut g_hidden = vec![0.0; self.hidden];
        let mut sse = 0.0;
        {
            let (g_w2, g_b2) = grad[l.w2..].split_at_mut(out_len * self.hidden);
            for (o, (p, target)) in pred.as_slice().iter().zip(y.as_slice()).enumerate() {
                let diff = p - target;
                sse += diff * diff;
                let g = 2.0 * scale * diff;
                g_b2[o] += g;
                let row = o * self.hidden..(o + 1) * self.hidden;
                for ((gw, a), (gh, w)) in
                    g_w2[row.clone()].iter_mut().zip(&act).zip(g_hidden.iter_mut().zip(&w2[row]))
                {
                    *gw += g * a;
                    *gh += g * w;
                }
            }
        }
        let input = flat(x);
        let cols = input.len();
        let (g_w1, rest) = grad.split_at_mut(l.w1);
        let g_b1 = &mut rest[..self.hidden];
        for (k, (gh, z)) in g_hidden.iter().zip(&pre).enumerate() {
            if *z <= 0.0 {
                continue;
            }
            g_b1[k] += gh;
            for (gw, xi) in g_w1[k * cols..(k + 1) * cols].iter_mut().zip(input) {
                *gw += gh * xi;
            }
        }
        sse
    }
}
