use super::{Dims, ForecastError, Forecaster};
use crate::matrix::Matrix;

/// Repeats the last observed row over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Persistence {
    dims: Dims,
}

impl Persistence {
    pub fn new(dims: Dims) -> Self {
        Self { dims }
    }
}

impl Forecaster for Persistence {
    fn name(&self) -> String {
        "Persistence".into()
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix, ForecastError> {
        self.dims.check_input(x)?;
        let last = x.row(x.rows() - 1);
        let mut out = Matrix::zeros(self.dims.horizon, self.dims.n);
        for r in 0..self.dims.horizon {
            out.row_mut(r).copy_from_slice(last);
        }
        Ok(out)
    }
}

/// Predicts the per-sensor training mean regardless of input.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMean {
    dims: Dims,
    means: Vec<f64>,
}

impl GlobalMean {
    pub fn new(dims: Dims, means: Vec<f64>) -> Self {
        assert_eq!(means.len(), dims.n);
        Self { dims, means }
    }

    /// On standardized data the training mean of every sensor is zero.
    pub fn standardized(dims: Dims) -> Self {
        Self::new(dims, vec![0.0; dims.n])
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }
}

impl Forecaster for GlobalMean {
    fn name(&self) -> String {
        "GlobalMean".into()
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix, ForecastError> {
        self.dims.check_input(x)?;
        let mut out = Matrix::zeros(self.dims.horizon, self.dims.n);
        for r in 0..self.dims.horizon {
            out.row_mut(r).copy_from_slice(&self.means);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persistence_repeats_last_row() {
        let m = Persistence::new(Dims::new(3, 2, 2));
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, -1.0]]).unwrap();
        assert_eq!(m.predict(&x).unwrap().to_rows(), vec![vec![2.0, -1.0], vec![2.0, -1.0]]);
    }

    #[test]
    fn global_mean_on_standardized_data_is_zero() {
        let m = GlobalMean::standardized(Dims::new(2, 3, 2));
        let x = Matrix::filled(2, 2, 4.0);
        assert_eq!(m.predict(&x).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn input_checks() {
        let m = Persistence::new(Dims::new(3, 2, 2));
        assert!(matches!(m.predict(&Matrix::zeros(2, 2)), Err(ForecastError::ShapeMismatch { .. })));
        let mut x = Matrix::zeros(3, 2);
        x[(1, 1)] = f64::NAN;
        assert!(matches!(m.predict(&x), Err(ForecastError::NonFiniteInput)));
    }
}
