use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::json;

use super::{AdapterSettings, CliError, ExternalForecaster, RunConfig};
use crate::disturb::Scenario;
use crate::forecast::{self, BuiltinModel, Dims, Forecaster, ModelKind};
use crate::ingest::{self, SensorMeta};
use crate::matrix::Matrix;
use crate::pipeline::{self, Splits, Standardizer, WindowSample};
use crate::score::{self, RobustnessReport, ReportInputs, ScenarioOutcome, Timing};

/// Standardized data and sampled windows for one run.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub column_names: Vec<String>,
    /// Carries the training mean and std of every sensor.
    pub meta: Vec<SensorMeta>,
    pub splits: Splits,
    pub standardizer: Standardizer,
    pub table: Matrix,
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub provenance: Vec<String>,
}

impl PreparedData {
    pub fn dims(&self) -> Dims {
        Dims::new(self.train[0].t(), self.train[0].horizon(), self.table.cols())
    }

    fn pipeline_json(&self) -> serde_json::Value {
        let origins = |w: &[WindowSample]| w.iter().map(|s| s.origin).collect::<Vec<_>>();
        json!({
            "rows": self.table.rows(),
            "n_sensors": self.table.cols(),
            "column_names": self.column_names,
            "splits": self.splits,
            "standardizer": self.standardizer,
            "sensors": self.meta,
            "window_origins": {
                "train": origins(&self.train),
                "val": origins(&self.val),
                "test": origins(&self.test),
            },
            "provenance": self.provenance,
        })
    }
}

/// Ingest, split, standardize and sample windows.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData, CliError> {
    let raw = ingest::load_table(&cfg.dataset.path, &cfg.dataset.load).map_err(CliError::ingest)?;
    let raw = ingest::drop_missing(raw).map_err(CliError::ingest)?;
    let mut meta = ingest::classify_sensors(&raw, cfg.dataset.max_discrete_cardinality);

    let span = cfg.t + cfg.horizon;
    let splits = pipeline::split_time(raw.rows(), &cfg.split, span).map_err(CliError::pipeline)?;
    let standardizer = Standardizer::fit(&raw.values, &splits.train);
    let table = standardizer.apply(&raw.values).map_err(CliError::pipeline)?;

    let mut provenance = raw.provenance.clone();
    for (j, m) in meta.iter_mut().enumerate() {
        m.train_mean = standardizer.means[j];
        m.train_std = standardizer.stds[j];
        if standardizer.guarded[j] {
            provenance.push(format!("sensor {} is constant on the training segment; std set to 1", m.name));
        }
        if m.is_degenerate() {
            provenance.push(format!("sensor {} has a single observed state", m.name));
        }
    }

    let sample = |seg, count| {
        pipeline::sample_windows(&table, seg, cfg.t, cfg.horizon, count, cfg.seed).map_err(CliError::pipeline)
    };
    let train = sample(&splits.train, cfg.windows.train)?;
    let val = sample(&splits.val, cfg.windows.val)?;
    let test = sample(&splits.test, cfg.windows.test)?;

    Ok(PreparedData {
        name: cfg.dataset.name.clone().unwrap_or(raw.name),
        column_names: raw.column_names,
        meta,
        splits,
        standardizer,
        table,
        train,
        val,
        test,
        provenance,
    })
}

enum Model {
    Builtin(BuiltinModel),
    External(ExternalForecaster),
}

impl Model {
    fn forecaster(&self) -> &dyn Forecaster {
        match self {
            Self::Builtin(m) => m,
            Self::External(m) => m,
        }
    }
}

fn build_model(
    cfg: &RunConfig,
    data: &PreparedData,
) -> Result<(Model, Option<serde_json::Value>), CliError> {
    let dims = data.dims();
    if cfg.model.kind == ModelKind::External {
        let cmd = cfg.model.adapter_cmd.as_deref().ok_or_else(|| CliError::Config("adapter_cmd missing".into()))?;
        let settings = AdapterSettings {
            handshake_timeout: Duration::from_secs(cfg.model.handshake_timeout_secs),
            request_timeout: Duration::from_secs(cfg.model.request_timeout_secs),
            batch_size: cfg.predict_batch_size,
        };
        let ext = ExternalForecaster::spawn(cmd, dims, cfg.model.model_config.clone(), &settings)
            .map_err(|source| CliError::Adapter { stage: "adapter handshake", source })?;
        return Ok((Model::External(ext), None));
    }
    let mut model = BuiltinModel::new(cfg.model.kind, dims, &cfg.model.hyper, cfg.seed)
        .map_err(|e| CliError::forecast("model", e))?;
    let summary = match model.as_differentiable_mut() {
        Some(m) => {
            let s = forecast::train(m, &data.train, &data.val, &cfg.train_config())
                .map_err(|e| CliError::forecast("train", e))?;
            Some(serde_json::to_value(s).expect("summary serializes"))
        }
        None => None,
    };
    if let Some(path) = &cfg.output.model {
        forecast::save_model(&model, path).map_err(|e| CliError::forecast("save model", e))?;
    }
    Ok((Model::Builtin(model), summary))
}

fn mean_mse(f: &dyn Forecaster, windows: &[WindowSample], batch: usize) -> Result<f64, CliError> {
    let mut sum = 0.0;
    for chunk in windows.chunks(batch.max(1)) {
        let xs: Vec<Matrix> = chunk.iter().map(|w| w.x.clone()).collect();
        let preds = f.predict_batch(&xs).map_err(|e| CliError::forecast("baseline", e))?;
        for (w, p) in chunk.iter().zip(&preds) {
            sum += score::mse(&w.y, p).map_err(CliError::score)?;
        }
    }
    Ok(sum / windows.len() as f64)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::io("setup", "worker pool", e))
}

/// Runs the full benchmark for one dataset and model and writes the
/// configured outputs.
pub fn run(cfg: &RunConfig) -> Result<RobustnessReport, CliError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();

    pool(cfg.workers)?.install(|| {
        let data = prepare_data(cfg)?;
        let train_clock = Instant::now();
        let (model, training) = build_model(cfg, &data)?;
        let training_seconds = train_clock.elapsed().as_secs_f64();
        let f = model.forecaster();

        let baseline_val_mse = mean_mse(f, &data.val, cfg.predict_batch_size)?;
        let baseline_test_mse = mean_mse(f, &data.test, cfg.predict_batch_size)?;

        let score_clock = Instant::now();
        let mut outcomes = Vec::with_capacity(cfg.scenarios.len());
        for &kind in &cfg.scenarios {
            let scenario = Scenario::prepare(kind, &data.meta, &cfg.disturbance, cfg.seed, cfg.t, cfg.horizon);
            if !scenario.is_applicable() {
                outcomes.push(ScenarioOutcome::Inapplicable { kind });
                continue;
            }
            let evaluation = score::disturbance_robustness(
                f,
                &scenario,
                &data.test,
                &grid,
                &cfg.metric,
                cfg.predict_batch_size,
            )
            .map_err(CliError::score)?;
            outcomes.push(ScenarioOutcome::Evaluated { kind, affected: scenario.affected, evaluation });
        }
        let scoring_seconds = score_clock.elapsed().as_secs_f64();

        let model_name = f.name();
        if let Model::External(ext) = model {
            ext.shutdown().map_err(|source| CliError::Adapter { stage: "adapter shutdown", source })?;
        }

        let report = score::build_report(ReportInputs {
            dataset: data.name.clone(),
            model: model_name,
            seed: cfg.seed,
            config: cfg.snapshot(),
            pipeline: data.pipeline_json(),
            metric: cfg.metric,
            sensor_names: data.column_names.clone(),
            baseline_val_mse,
            baseline_test_mse,
            training,
            outcomes,
            keep_sample_losses: cfg.persist_sample_losses,
            timing: Timing {
                started_at,
                elapsed_seconds: clock.elapsed().as_secs_f64(),
                training_seconds,
                scoring_seconds,
            },
        })
        .map_err(CliError::score)?;
        write_outputs(cfg, &report)?;
        Ok(report)
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io("report", &dir.display().to_string(), e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io("report", &path.display().to_string(), e))
}

fn write_outputs(cfg: &RunConfig, report: &RobustnessReport) -> Result<(), CliError> {
    if let Some(path) = &cfg.output.report {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, report).map_err(|e| CliError::io("report", "serialize", e))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io("report", &path.display().to_string(), e))?;
    }
    if let Some(path) = &cfg.output.curves_csv {
        score::write_curves_csv(report, create(path)?).map_err(|e| CliError::io("report", &path.display().to_string(), e))?;
    }
    Ok(())
}
