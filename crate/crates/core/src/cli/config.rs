use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::disturb::{DisturbanceKind, DisturbanceParams};
use crate::forecast::{HyperParams, ModelKind, TrainConfig};
use crate::ingest::{LoadOptions, DEFAULT_MAX_DISCRETE_CARDINALITY};
use crate::pipeline::SplitSpec;
use crate::score::{MetricSpec, SeverityGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default, flatten)]
    pub load: LoadOptions,
    #[serde(default = "default_cardinality")]
    pub max_discrete_cardinality: usize,
}

fn default_cardinality() -> usize {
    DEFAULT_MAX_DISCRETE_CARDINALITY
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for WindowCounts {
    fn default() -> Self {
        Self { train: 2048, val: 512, test: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(flatten)]
    pub hyper: HyperParams,
    /// Command line of an external adapter (kind `External`), run through `sh -c`.
    pub adapter_cmd: Option<String>,
    /// Passed verbatim to the adapter in the handshake.
    pub model_config: serde_json::Value,
    pub handshake_timeout_secs: u64,
    pub request_timeout_secs: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::DLinear,
            hyper: HyperParams::default(),
            adapter_cmd: None,
            model_config: serde_json::json!({}),
            handshake_timeout_secs: 60,
            request_timeout_secs: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub curves_csv: Option<PathBuf>,
    /// Where to save the trained model parameters.
    pub model: Option<PathBuf>,
}

/// One benchmark run. Every default is materialized when the config is
/// embedded in a report, so the snapshot alone replays the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub windows: WindowCounts,
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_severity_step")]
    pub severity_step: f64,
    #[serde(default)]
    pub disturbance: DisturbanceParams,
    #[serde(default = "all_scenarios")]
    pub scenarios: Vec<DisturbanceKind>,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for scenario evaluation; results do not depend on it.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Windows per prediction request.
    #[serde(default = "default_batch")]
    pub predict_batch_size: usize,
    /// Keep every per-window loss in the report.
    #[serde(default)]
    pub persist_sample_losses: bool,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_t() -> usize {
    90
}

fn default_horizon() -> usize {
    30
}

fn default_severity_step() -> f64 {
    0.01
}

fn default_batch() -> usize {
    64
}

fn all_scenarios() -> Vec<DisturbanceKind> {
    DisturbanceKind::ALL.to_vec()
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub severity_step: Option<f64>,
    pub test_windows: Option<usize>,
    pub adapter_cmd: Option<String>,
    pub curves_csv: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    /// Config with defaults everywhere except the dataset path.
    pub fn for_dataset(path: impl Into<PathBuf>) -> Self {
        serde_json::from_value(serde_json::json!({ "dataset": { "path": path.into() } }))
            .expect("default config deserializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output.report = Some(out.clone());
        }
        if let Some(step) = o.severity_step {
            self.severity_step = step;
        }
        if let Some(n) = o.test_windows {
            self.windows.test = n;
        }
        if let Some(cmd) = &o.adapter_cmd {
            self.model.kind = ModelKind::External;
            self.model.adapter_cmd = Some(cmd.clone());
        }
        if let Some(csv) = &o.curves_csv {
            self.output.curves_csv = Some(csv.clone());
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
    }

    /// Training runs on the run seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn grid(&self) -> Result<SeverityGrid, CliError> {
        SeverityGrid::from_step(self.severity_step).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.split.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.grid()?;
        if self.t == 0 || self.horizon == 0 {
            return bad("t and horizon must be positive".into());
        }
        if self.windows.train == 0 || self.windows.val == 0 || self.windows.test == 0 {
            return bad("window counts must be positive".into());
        }
        if self.dataset.max_discrete_cardinality == 0 {
            return bad("max_discrete_cardinality must be positive".into());
        }
        if !(self.metric.epsilon > 0.0 && self.metric.epsilon < 1.0) {
            return bad(format!("metric epsilon {} must lie in (0, 1)", self.metric.epsilon));
        }
        if self.scenarios.is_empty() {
            return bad("at least one scenario is required".into());
        }
        if self.predict_batch_size == 0 {
            return bad("predict_batch_size must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        let d = &self.disturbance;
        if !(1..=100).contains(&d.affected_percent) {
            return bad("affected_percent must lie in 1..=100".into());
        }
        if !(0.0..=1.0).contains(&d.hold_cap_frac) || !(0.0..=1.0).contains(&d.sampling_cap_frac) {
            return bad("length caps must be fractions in [0, 1]".into());
        }
        if ![d.offset_max, d.noise_scale, d.spike_magnitude].iter().all(|v| v.is_finite()) {
            return bad("disturbance magnitudes must be finite".into());
        }
        if self.model.kind == ModelKind::MLP && self.model.hyper.hidden_width == 0 {
            return bad("hidden_width must be positive".into());
        }
        if self.model.kind == ModelKind::DLinear && self.model.hyper.moving_average_kernel.is_multiple_of(2) {
            return bad("moving_average_kernel must be odd".into());
        }
        match (self.model.kind, &self.model.adapter_cmd) {
            (ModelKind::External, None) => bad("External model requires adapter_cmd".into()),
            _ => Ok(()),
        }
    }

    /// The config as embedded in a report.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_materializes_defaults() {
        let cfg = RunConfig::from_json(r#"{"dataset": {"path": "data.csv"}}"#).unwrap();
        assert_eq!(cfg.t, 90);
        assert_eq!(cfg.horizon, 30);
        assert_eq!(cfg.split, SplitSpec::default());
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.patience, 5);
        assert_eq!(cfg.severity_step, 0.01);
        assert_eq!(cfg.scenarios.len(), 10);
        assert_eq!(cfg.windows, WindowCounts { train: 2048, val: 512, test: 512 });
        assert_eq!(cfg.model.hyper.moving_average_kernel, 25);
        cfg.validate().unwrap();
    }

    #[test]
    fn snapshot_replays() {
        let mut cfg = RunConfig::for_dataset("x.csv");
        cfg.model.kind = ModelKind::MLP;
        cfg.disturbance.spike_magnitude = 5.0;
        cfg.seed = 9;
        let back: RunConfig = serde_json::from_value(cfg.snapshot()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(RunConfig::from_json(r#"{"dataset": {"path": "d.csv"}, "sed": 3}"#).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::for_dataset("x.csv");
        cfg.severity_step = 0.03;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::for_dataset("x.csv");
        cfg.model.kind = ModelKind::External;
        assert!(cfg.validate().is_err());
        cfg.apply(&Overrides { adapter_cmd: Some("python3 adapter.py".into()), ..Default::default() });
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::for_dataset("x.csv");
        cfg.apply(&Overrides { seed: Some(7), test_windows: Some(16), severity_step: Some(0.1), ..Default::default() });
        assert_eq!((cfg.seed, cfg.windows.test, cfg.severity_step), (7, 16, 0.1));
        assert_eq!(cfg.train_config().seed, 7);
    }
}
