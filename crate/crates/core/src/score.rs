//! Loss, relative performance, per-scenario robustness and the overall score.
//!
//! For a scenario the relative performance of one window at severity `s` is
//! `(loss(f(x), y) + ε) / (loss(f(x_d), y_d) + ε)`. Its mean over windows,
//! integrated over `s ∈ [0, 1]` with a right Riemann sum, is the scenario
//! score `R_d`; the overall score is the product of `R_d` over applicable
//! scenarios. All reductions fold in a fixed order so results do not depend
//! on the worker count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disturb::{Disturbance, DisturbanceKind};
use crate::forecast::{ForecastError, Forecaster};
use crate::matrix::Matrix;
use crate::pipeline::WindowSample;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("non-finite loss (original {0}, disturbed {1})")]
    NonFiniteLoss(f64, f64),
    #[error("no applicable disturbance scenario")]
    NoApplicableScenario,
    #[error("no samples to evaluate")]
    EmptySamples,
    #[error("invalid severity grid: {0}")]
    InvalidGrid(String),
    #[error("prediction failed for sample {sample}: {source}")]
    Prediction {
        sample: usize,
        #[source]
        source: ForecastError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    MSE,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub epsilon: f64,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self { kind: MetricKind::MSE, epsilon: DEFAULT_EPSILON }
    }
}

impl MetricSpec {
    pub fn loss(&self, y: &Matrix, yhat: &Matrix) -> Result<f64, ScoreError> {
        match self.kind {
            MetricKind::MSE => mse(y, yhat),
        }
    }
}

pub fn mse(y: &Matrix, yhat: &Matrix) -> Result<f64, ScoreError> {
    if y.shape() != yhat.shape() {
        return Err(ScoreError::ShapeMismatch(y.shape(), yhat.shape()));
    }
    let sse: f64 = y.as_slice().iter().zip(yhat.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / y.as_slice().len() as f64)
}

/// `(loss_orig + ε) / (loss_dist + ε)`, unclamped.
pub fn relative_performance(loss_orig: f64, loss_dist: f64, eps: f64) -> Result<f64, ScoreError> {
    if !(loss_orig.is_finite() && loss_dist.is_finite()) || loss_orig < 0.0 || loss_dist < 0.0 {
        return Err(ScoreError::NonFiniteLoss(loss_orig, loss_dist));
    }
    Ok((loss_orig + eps) / (loss_dist + eps))
}

/// Severities `{1/N, 2/N, …, 1}` with `N = 1/step`. Zero is excluded since
/// the relative performance there is 1 by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityGrid {
    steps: usize,
}

impl Default for SeverityGrid {
    fn default() -> Self {
        Self { steps: 100 }
    }
}

impl SeverityGrid {
    pub fn from_step(step: f64) -> Result<Self, ScoreError> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(ScoreError::InvalidGrid(format!("step {step} outside (0, 1]")));
        }
        let steps = (1.0 / step).round();
        if ((1.0 / step) - steps).abs() > 1e-9 {
            return Err(ScoreError::InvalidGrid(format!("1/{step} is not an integer")));
        }
        Ok(Self { steps: steps as usize })
    }

    pub fn with_steps(steps: usize) -> Self {
        assert!(steps > 0);
        Self { steps }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (1..=self.steps).map(|k| k as f64 / self.steps as f64).collect()
    }
}

/// Right Riemann sum of a curve sampled on `grid`.
pub fn integrate_curve(curve: &[f64], grid: &SeverityGrid) -> f64 {
    let step = grid.step();
    curve.iter().fold(0.0, |acc, v| acc + v * step)
}

/// Per-window losses behind one scenario score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLosses {
    pub baseline: Vec<f64>,
    /// `disturbed[k][i]`: loss of window `i` at the `k`-th grid severity.
    pub disturbed: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvaluation {
    pub severities: Vec<f64>,
    /// Mean relative performance at each grid severity.
    pub curve: Vec<f64>,
    pub r_d: f64,
    pub losses: SampleLosses,
}

fn predict_all<F: Forecaster + ?Sized>(f: &F, xs: Vec<Matrix>, batch: usize) -> Result<Vec<Matrix>, ScoreError> {
    let mut out = Vec::with_capacity(xs.len());
    for (c, chunk) in xs.chunks(batch.max(1)).enumerate() {
        let preds = f.predict_batch(chunk).map_err(|source| ScoreError::Prediction { sample: c * batch.max(1), source })?;
        out.extend(preds);
    }
    Ok(out)
}

fn losses(metric: &MetricSpec, targets: impl IndexedParallelIterator<Item = Matrix>, preds: &[Matrix]) -> Result<Vec<f64>, ScoreError> {
    targets.zip(preds.par_iter()).map(|(y, p)| metric.loss(&y, p)).collect()
}

/// Scores one scenario over `samples`. Predictions on the original windows
/// are computed once; each severity re-predicts on the disturbed inputs.
pub fn disturbance_robustness<F, D>(
    forecaster: &F,
    disturbance: &D,
    samples: &[WindowSample],
    grid: &SeverityGrid,
    metric: &MetricSpec,
    batch_size: usize,
) -> Result<ScenarioEvaluation, ScoreError>
where
    F: Forecaster + ?Sized,
    D: Disturbance,
{
    if samples.is_empty() {
        return Err(ScoreError::EmptySamples);
    }
    let base_preds = predict_all(forecaster, samples.iter().map(|s| s.x.clone()).collect(), batch_size)?;
    let baseline = losses(metric, samples.par_iter().map(|s| s.y.clone()), &base_preds)?;
    let states: Vec<D::State> =
        samples.par_iter().enumerate().map(|(i, s)| disturbance.sample_state(i, s)).collect();

    let severities = grid.points();
    let mut curve = Vec::with_capacity(severities.len());
    let mut disturbed = Vec::with_capacity(severities.len());
    for &s in &severities {
        let (xs, ys): (Vec<Matrix>, Vec<Matrix>) = samples
            .par_iter()
            .zip(states.par_iter())
            .map(|(sample, state)| {
                let d = disturbance.disturb(s, sample, state);
                (d.x, d.y)
            })
            .unzip();
        let preds = predict_all(forecaster, xs, batch_size)?;
        let dist_losses = losses(metric, ys.into_par_iter(), &preds)?;
        let mut sum = 0.0;
        for (orig, dist) in baseline.iter().zip(&dist_losses) {
            sum += relative_performance(*orig, *dist, metric.epsilon)?;
        }
        curve.push(sum / samples.len() as f64);
        disturbed.push(dist_losses);
    }
    let r_d = integrate_curve(&curve, grid);
    Ok(ScenarioEvaluation { severities, curve, r_d, losses: SampleLosses { baseline, disturbed } })
}

/// Product of the applicable scenario scores.
pub fn overall_robustness(scores: impl IntoIterator<Item = f64>) -> Result<f64, ScoreError> {
    let mut any = false;
    let product = scores.into_iter().fold(1.0, |acc, r| {
        any = true;
        acc * r
    });
    if any {
        Ok(product)
    } else {
        Err(ScoreError::NoApplicableScenario)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub kind: DisturbanceKind,
    pub applicable: bool,
    pub affected: Vec<usize>,
    pub affected_names: Vec<String>,
    pub severities: Vec<f64>,
    pub curve: Vec<f64>,
    pub r_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_losses: Option<SampleLosses>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: String,
    pub elapsed_seconds: f64,
    pub training_seconds: f64,
    pub scoring_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub schema_version: u32,
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    /// Fully materialized run configuration.
    pub config: serde_json::Value,
    /// Realized split, standardizer and sensor metadata.
    pub pipeline: serde_json::Value,
    pub metric: MetricSpec,
    pub baseline_val_mse: f64,
    pub baseline_test_mse: f64,
    #[serde(default)]
    pub training: Option<serde_json::Value>,
    pub scenarios: Vec<ScenarioReport>,
    pub overall_robustness: f64,
    pub timing: Timing,
}

impl RobustnessReport {
    /// The report without wall-clock fields, output paths and worker count,
    /// for determinism comparisons.
    pub fn numeric_payload(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
            if let Some(cfg) = obj.get_mut("config").and_then(|c| c.as_object_mut()) {
                cfg.remove("output");
                cfg.remove("workers");
            }
        }
        v
    }

    pub fn applicable_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scenarios.iter().filter(|s| s.applicable).filter_map(|s| s.r_d)
    }

    pub fn scenario(&self, kind: DisturbanceKind) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.kind == kind)
    }
}

/// Outcome of one scenario ahead of report assembly.
#[derive(Debug, Clone)]
pub enum ScenarioOutcome {
    Inapplicable { kind: DisturbanceKind },
    Evaluated { kind: DisturbanceKind, affected: Vec<usize>, evaluation: ScenarioEvaluation },
}

pub struct ReportInputs {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub pipeline: serde_json::Value,
    pub metric: MetricSpec,
    pub sensor_names: Vec<String>,
    pub baseline_val_mse: f64,
    pub baseline_test_mse: f64,
    pub training: Option<serde_json::Value>,
    pub outcomes: Vec<ScenarioOutcome>,
    pub keep_sample_losses: bool,
    pub timing: Timing,
}

pub fn build_report(inputs: ReportInputs) -> Result<RobustnessReport, ScoreError> {
    let names = &inputs.sensor_names;
    let scenarios: Vec<ScenarioReport> = inputs
        .outcomes
        .into_iter()
        .map(|o| match o {
            ScenarioOutcome::Inapplicable { kind } => ScenarioReport {
                kind,
                applicable: false,
                affected: Vec::new(),
                affected_names: Vec::new(),
                severities: Vec::new(),
                curve: Vec::new(),
                r_d: None,
                sample_losses: None,
            },
            ScenarioOutcome::Evaluated { kind, affected, evaluation } => ScenarioReport {
                kind,
                applicable: true,
                affected_names: affected.iter().map(|&j| names.get(j).cloned().unwrap_or_default()).collect(),
                affected,
                severities: evaluation.severities,
                curve: evaluation.curve,
                r_d: Some(evaluation.r_d),
                sample_losses: inputs.keep_sample_losses.then_some(evaluation.losses),
            },
        })
        .collect();
    let overall = overall_robustness(scenarios.iter().filter_map(|s| s.r_d))?;
    Ok(RobustnessReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: inputs.dataset,
        model: inputs.model,
        seed: inputs.seed,
        config: inputs.config,
        pipeline: inputs.pipeline,
        metric: inputs.metric,
        baseline_val_mse: inputs.baseline_val_mse,
        baseline_test_mse: inputs.baseline_test_mse,
        training: inputs.training,
        scenarios,
        overall_robustness: overall,
        timing: inputs.timing,
    })
}

/// `scenario,severity,mean_relative_performance` rows for every applicable scenario.
pub fn write_curves_csv<W: Write>(report: &RobustnessReport, writer: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["scenario", "severity", "mean_relative_performance"])?;
    for sc in report.scenarios.iter().filter(|s| s.applicable) {
        for (s, v) in sc.severities.iter().zip(&sc.curve) {
            out.write_record([sc.kind.name().to_string(), s.to_string(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturb::DisturbedSample;
    use crate::forecast::Dims;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        let a = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        let y = Matrix::from_rows(&[[1.0, 3.0]]).unwrap();
        let p = Matrix::from_rows(&[[2.0, 1.0]]).unwrap();
        assert_eq!(mse(&y, &p).unwrap(), 2.5);
        assert!(matches!(mse(&a, &Matrix::zeros(2, 2)), Err(ScoreError::ShapeMismatch(..))));
    }

    #[test]
    fn relative_performance_examples() {
        assert_eq!(relative_performance(0.3, 0.3, 1e-6).unwrap(), 1.0);
        assert_eq!(relative_performance(0.0, 0.0, 1e-6).unwrap(), 1.0);
        // (0.5 + 1e-6) / (1 + 1e-6)
        assert_abs_diff_eq!(relative_performance(0.5, 1.0, 1e-6).unwrap(), 0.500001 / 1.000001, epsilon = 1e-15);
        assert_abs_diff_eq!(relative_performance(0.5, 1.0, 1e-6).unwrap(), 0.5000004999995, epsilon = 1e-12);
        assert!(relative_performance(2.0, 1.0, 1e-6).unwrap() > 1.0);
        assert!(matches!(relative_performance(f64::NAN, 1.0, 1e-6), Err(ScoreError::NonFiniteLoss(..))));
    }

    #[test]
    fn grid_construction() {
        let g = SeverityGrid::from_step(0.01).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 100);
        assert_eq!(pts[0], 0.01);
        assert_eq!(*pts.last().unwrap(), 1.0);
        assert!(SeverityGrid::from_step(0.03).is_err());
        assert!(SeverityGrid::from_step(0.0).is_err());
        assert_eq!(SeverityGrid::from_step(1.0).unwrap().points(), vec![1.0]);
    }

    #[test]
    fn single_point_grid() {
        assert_eq!(integrate_curve(&[0.8], &SeverityGrid::with_steps(1)), 0.8);
    }

    #[test]
    fn overall_examples() {
        assert_abs_diff_eq!(overall_robustness([1.0, 0.5, 0.8]).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(overall_robustness([0.9, 0.0, 0.7]).unwrap(), 0.0);
        assert_eq!(overall_robustness([0.7]).unwrap(), 0.7);
        assert!(matches!(overall_robustness([]), Err(ScoreError::NoApplicableScenario)));
    }

    struct Constant(Dims);

    impl Forecaster for Constant {
        fn name(&self) -> String {
            "Constant".into()
        }
        fn dims(&self) -> Dims {
            self.0
        }
        fn predict(&self, _x: &Matrix) -> Result<Matrix, ForecastError> {
            Ok(Matrix::filled(self.0.horizon, self.0.n, 0.25))
        }
    }

    /// Adds `s` to every input cell.
    struct Shift;

    impl Disturbance for Shift {
        type State = ();
        fn preserves_target(&self) -> bool {
            true
        }
        fn sample_state(&self, _: usize, _: &WindowSample) {}
        fn disturb(&self, s: f64, w: &WindowSample, _: &()) -> DisturbedSample {
            let mut x = w.x.clone();
            x.as_mut_slice().iter_mut().for_each(|v| *v += s);
            DisturbedSample { x, y: w.y.clone(), severity: s }
        }
    }

    fn windows(count: usize) -> Vec<WindowSample> {
        (0..count)
            .map(|i| WindowSample {
                x: Matrix::filled(3, 2, i as f64),
                y: Matrix::filled(2, 2, i as f64 * 0.5),
                origin: i,
            })
            .collect()
    }

    #[test]
    fn input_independent_forecaster_scores_one() {
        let eval = disturbance_robustness(
            &Constant(Dims::new(3, 2, 2)),
            &Shift,
            &windows(5),
            &SeverityGrid::from_step(0.1).unwrap(),
            &MetricSpec::default(),
            2,
        )
        .unwrap();
        assert!(eval.curve.iter().all(|v| *v == 1.0));
        assert_abs_diff_eq!(eval.r_d, 1.0, epsilon = 1e-12);
        assert_eq!(eval.losses.disturbed.len(), 10);
    }

    #[test]
    fn empty_samples_rejected() {
        let r = disturbance_robustness(
            &Constant(Dims::new(3, 2, 2)),
            &Shift,
            &[],
            &SeverityGrid::default(),
            &MetricSpec::default(),
            2,
        );
        assert!(matches!(r, Err(ScoreError::EmptySamples)));
    }

    fn outcome(kind: DisturbanceKind, r_d: f64) -> ScenarioOutcome {
        ScenarioOutcome::Evaluated {
            kind,
            affected: vec![0],
            evaluation: ScenarioEvaluation {
                severities: vec![1.0],
                curve: vec![r_d],
                r_d,
                losses: SampleLosses { baseline: vec![0.1], disturbed: vec![vec![0.2]] },
            },
        }
    }

    fn inputs(outcomes: Vec<ScenarioOutcome>) -> ReportInputs {
        ReportInputs {
            dataset: "d".into(),
            model: "m".into(),
            seed: 1,
            config: serde_json::json!({}),
            pipeline: serde_json::json!({}),
            metric: MetricSpec::default(),
            sensor_names: vec!["a".into()],
            baseline_val_mse: 0.1,
            baseline_test_mse: 0.2,
            training: None,
            outcomes,
            keep_sample_losses: false,
            timing: Timing { started_at: "now".into(), elapsed_seconds: 1.0, training_seconds: 0.0, scoring_seconds: 1.0 },
        }
    }

    #[test]
    fn report_excludes_inapplicable_from_product() {
        let report = build_report(inputs(vec![
            outcome(DisturbanceKind::Drift, 0.5),
            ScenarioOutcome::Inapplicable { kind: DisturbanceKind::OscillatingSensor },
            outcome(DisturbanceKind::Noise, 0.8),
        ]))
        .unwrap();
        assert_abs_diff_eq!(report.overall_robustness, 0.4, epsilon = 1e-15);
        assert!(!report.scenario(DisturbanceKind::OscillatingSensor).unwrap().applicable);
        let product: f64 = report.applicable_scores().product();
        assert!((report.overall_robustness - product).abs() < 1e-12);
        assert_eq!(report.scenario(DisturbanceKind::Drift).unwrap().affected_names, vec!["a"]);
        assert!(report.numeric_payload().get("timing").is_none());

        let mut csv = Vec::new();
        write_curves_csv(&report, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text, "scenario,severity,mean_relative_performance\nDrift,1,0.5\nNoise,1,0.8\n");

        assert!(matches!(
            build_report(inputs(vec![ScenarioOutcome::Inapplicable { kind: DisturbanceKind::Drift }])),
            Err(ScoreError::NoApplicableScenario)
        ));
    }

    proptest! {
        #[test]
        fn relative_performance_positive(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let r = relative_performance(a, b, 1e-6).unwrap();
            prop_assert!(r > 0.0);
            if a == b {
                prop_assert_eq!(r, 1.0);
            }
        }

        #[test]
        fn halving_step_bounded_by_lipschitz(slope in -2.0f64..2.0, curv in -1.0f64..1.0) {
            // smooth curve μ(s) = 1 + slope·s + curv·s²; Lipschitz constant bounded by |slope| + 2|curv|
            let f = |s: f64| 1.0 + slope * s + curv * s * s;
            let coarse = SeverityGrid::with_steps(50);
            let fine = SeverityGrid::with_steps(100);
            let rc = integrate_curve(&coarse.points().iter().map(|s| f(*s)).collect::<Vec<_>>(), &coarse);
            let rf = integrate_curve(&fine.points().iter().map(|s| f(*s)).collect::<Vec<_>>(), &fine);
            let lipschitz = slope.abs() + 2.0 * curv.abs();
            prop_assert!((rc - rf).abs() <= lipschitz * coarse.step() + 1e-12);
        }
    }
}
