use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BuiltinModel, DLinear, Differentiable, Dims, ForecastError, GlobalMean, HyperParams, Linear, Mlp, ModelKind, Persistence};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT: &str = "cpsrobust-model";

/// On-disk parameter file: kind, hyperparameters, dimension header and the
/// flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub hyper: HyperParams,
    pub dims: Dims,
    pub params: Vec<f64>,
}

impl ModelFile {
    pub fn from_model(model: &BuiltinModel) -> Self {
        let mut hyper = HyperParams::default();
        let (dims, params) = match model {
            BuiltinModel::Persistence(m) => (super::Forecaster::dims(m), Vec::new()),
            BuiltinModel::GlobalMean(m) => (super::Forecaster::dims(m), m.means().to_vec()),
            BuiltinModel::Linear(m) => (super::Forecaster::dims(m), m.params().to_vec()),
            BuiltinModel::DLinear(m) => {
                hyper.moving_average_kernel = m.kernel();
                (super::Forecaster::dims(m), m.params().to_vec())
            }
            BuiltinModel::Mlp(m) => {
                hyper.hidden_width = m.hidden_width();
                (super::Forecaster::dims(m), m.params().to_vec())
            }
        };
        Self { format: MODEL_FORMAT.into(), version: MODEL_FORMAT_VERSION, kind: model.kind(), hyper, dims, params }
    }

    pub fn into_model(self) -> Result<BuiltinModel, ForecastError> {
        if self.format != MODEL_FORMAT || self.version != MODEL_FORMAT_VERSION {
            return Err(ForecastError::ModelFile(format!(
                "unsupported model file {} v{}",
                self.format, self.version
            )));
        }
        let dims = self.dims;
        Ok(match self.kind {
            ModelKind::Persistence => BuiltinModel::Persistence(Persistence::new(dims)),
            ModelKind::GlobalMean => {
                if self.params.len() != dims.n {
                    return Err(ForecastError::ModelFile("GlobalMean needs one mean per sensor".into()));
                }
                BuiltinModel::GlobalMean(GlobalMean::new(dims, self.params))
            }
            ModelKind::Linear => BuiltinModel::Linear(Linear::from_params(dims, self.params)?),
            ModelKind::DLinear => {
                BuiltinModel::DLinear(DLinear::from_params(dims, self.hyper.moving_average_kernel, self.params)?)
            }
            ModelKind::MLP => BuiltinModel::Mlp(Mlp::from_params(dims, self.hyper.hidden_width, self.params)?),
            ModelKind::External => return Err(ForecastError::NotTrainable(ModelKind::External)),
        })
    }
}

pub fn save_model(model: &BuiltinModel, path: &Path) -> Result<(), ForecastError> {
    let file = ModelFile::from_model(model);
    let text = serde_json::to_string(&file).map_err(|e| ForecastError::ModelFile(e.to_string()))?;
    fs::write(path, text).map_err(|e| ForecastError::ModelFile(format!("{}: {e}", path.display())))
}

/// Loads a model file, rejecting it when its dimension header differs from `expected`.
pub fn load_model(path: &Path, expected: Option<Dims>) -> Result<BuiltinModel, ForecastError> {
    let text = fs::read_to_string(path).map_err(|e| ForecastError::ModelFile(format!("{}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| ForecastError::ModelFile(e.to_string()))?;
    if let Some(expected) = expected {
        if file.dims != expected {
            return Err(ForecastError::ModelFile(format!(
                "dimension header {:?} does not match expected {:?}",
                file.dims, expected
            )));
        }
    }
    file.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::Forecaster;
    use crate::matrix::Matrix;

    #[test]
    fn round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(6, 2, 2);
        let hyper = HyperParams { hidden_width: 5, moving_average_kernel: 3 };
        let x = Matrix::from_vec(6, 2, (0..12).map(|v| (v as f64).sin()).collect());
        for kind in [ModelKind::Persistence, ModelKind::GlobalMean, ModelKind::Linear, ModelKind::DLinear, ModelKind::MLP] {
            let model = BuiltinModel::new(kind, dims, &hyper, 7).unwrap();
            let path = dir.path().join(format!("{kind:?}.json"));
            save_model(&model, &path).unwrap();
            let back = load_model(&path, Some(dims)).unwrap();
            assert_eq!(back, model);
            assert!(back.predict(&x).unwrap().bit_eq(&model.predict(&x).unwrap()));
        }
    }

    #[test]
    fn dimension_header_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = BuiltinModel::new(ModelKind::Linear, Dims::new(4, 2, 1), &HyperParams::default(), 0).unwrap();
        save_model(&model, &path).unwrap();
        assert!(matches!(load_model(&path, Some(Dims::new(4, 3, 1))), Err(ForecastError::ModelFile(_))));
    }
}
