mod common;

use std::fs;
use std::time::Duration;

use common::*;
use cpsrobust::cli::{self, read_report, AdapterError, AdapterSettings, ExternalForecaster};
use cpsrobust::forecast::{Dims, Forecaster, ModelKind, Persistence};
use cpsrobust::Matrix;

#[test]
fn persistence_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 600, 3, 1);
    let mut cfg = small_config(&data);
    cfg.model.kind = ModelKind::Persistence;
    let config = write_config(dir.path(), "run.json", &cfg);
    let report = dir.path().join("out/report.json");
    let curves = dir.path().join("curves.csv");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&report)
        .arg("--curves-csv")
        .arg(&curves)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let r = read_report(&report).unwrap();
    assert_eq!(r.model, "Persistence");
    assert_eq!(r.scenarios.len(), 10);
    assert!(r.overall_robustness.is_finite());
    let csv = fs::read_to_string(&curves).unwrap();
    assert!(csv.starts_with("scenario,severity,mean_relative_performance\n"));
    assert_eq!(csv.lines().count(), 1 + 10 * 20);
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("absent.csv"));
    let config = write_config(dir.path(), "run.json", &cfg);
    let out = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("ingest") && err.contains("FileNotFound"), "{err}");
}

#[test]
fn too_short_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 100, 2, 0);
    let config = write_config(dir.path(), "run.json", &small_config(&data));
    let out = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("pipeline"));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"dataset": {"path": "x.csv"}, "severity_step": 0.03}"#).unwrap();
    let out = bin().args(["validate-config", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("config"));

    fs::write(&bad, "{not json").unwrap();
    assert_eq!(bin().args(["run", "--config"]).arg(&bad).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["run"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["frobnicate"]).output().unwrap().status.code(), Some(1));
}

#[test]
fn validate_config_prints_materialized_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("min.json");
    fs::write(&config, r#"{"dataset": {"path": "x.csv"}}"#).unwrap();
    let out = bin().args(["validate-config", "--config"]).arg(&config).args(["--seed", "3"]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["t"], 90);
    assert_eq!(v["horizon"], 30);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["train"]["batch_size"], 64);
    assert_eq!(v["scenarios"].as_array().unwrap().len(), 10);
}

#[test]
fn same_seed_gives_identical_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 600, 3, 2);
    let mut cfg = small_config(&data);
    cfg.model.kind = ModelKind::Linear;
    let config = write_config(dir.path(), "run.json", &cfg);
    let mut payloads = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name);
        let out = bin().args(["run", "--config"]).arg(&config).args(["--seed", "7", "--out"]).arg(&path).output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        payloads.push(read_report(&path).unwrap().numeric_payload());
    }
    assert_eq!(payloads[0], payloads[1]);
    assert_eq!(payloads[0]["seed"], 7);
}

#[test]
fn export_curves_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 600, 3, 3);
    let mut reports = Vec::new();
    for (i, kind) in [ModelKind::Persistence, ModelKind::GlobalMean, ModelKind::Persistence].into_iter().enumerate() {
        let mut cfg = small_config(&data);
        cfg.model.kind = kind;
        cfg.seed = i as u64;
        cfg.output.report = Some(dir.path().join(format!("r{i}.json")));
        cfg.output.curves_csv = Some(dir.path().join(format!("c{i}.csv")));
        cli::run(&cfg).unwrap();
        reports.push(cfg.output.report.unwrap());
    }

    let exported = dir.path().join("exported.csv");
    let out = bin().arg("export-curves").arg(&reports[0]).arg("--out").arg(&exported).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&exported).unwrap(), fs::read(dir.path().join("c0.csv")).unwrap());

    let summary = dir.path().join("summary.csv");
    let out = bin().arg("aggregate").args(&reports).arg("--out").arg(&summary).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("Persistence") && table.contains("GlobalMean"), "{table}");
    let csv = fs::read_to_string(&summary).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("model,reports,robustness_mean,robustness_std,test_mse_mean,test_mse_std"));

    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&reports[1]).unwrap()).unwrap();
    v["schema_version"] = serde_json::json!(99);
    fs::write(&reports[1], v.to_string()).unwrap();
    let out = bin().arg("aggregate").args(&reports).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("SchemaMismatch"));
}

#[test]
fn worker_count_does_not_change_payload() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 600, 4, 4);
    let mut cfg = small_config(&data);
    cfg.model.kind = ModelKind::MLP;
    cfg.workers = Some(1);
    let one = cli::run(&cfg).unwrap();
    cfg.workers = Some(4);
    let four = cli::run(&cfg).unwrap();
    assert_eq!(one.numeric_payload(), four.numeric_payload());
}

#[test]
fn adapter_persistence_parity() {
    if !python_available() {
        eprintln!("python3 not found; skipping adapter parity");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 600, 3, 5);
    let mut cfg = small_config(&data);
    cfg.model.kind = ModelKind::Persistence;
    let builtin = cli::run(&cfg).unwrap();
    cfg.model.kind = ModelKind::External;
    cfg.model.adapter_cmd = Some(adapter_cmd("persistence"));
    cfg.predict_batch_size = 7;
    let external = cli::run(&cfg).unwrap();
    assert_eq!(external.model, "fixture-persistence");
    assert!((builtin.overall_robustness - external.overall_robustness).abs() < 1e-9);
    for (a, b) in builtin.scenarios.iter().zip(&external.scenarios) {
        assert_eq!(a.kind, b.kind);
        match (a.r_d, b.r_d) {
            (Some(x), Some(y)) => assert!((x - y).abs() < 1e-9, "{}: {x} vs {y}", a.kind),
            (x, y) => assert_eq!(x, y),
        }
    }
}

fn spawn(mode: &str, settings: &AdapterSettings) -> Result<ExternalForecaster, AdapterError> {
    ExternalForecaster::spawn(&adapter_cmd(mode), Dims::new(6, 3, 2), serde_json::json!({}), settings)
}

fn windows(count: usize) -> Vec<Matrix> {
    (0..count).map(|i| Matrix::from_vec(6, 2, (0..12).map(|v| (v * (i + 1)) as f64 * 0.25).collect())).collect()
}

#[test]
fn adapter_requests_are_answered_once_each() {
    if !python_available() {
        return;
    }
    let settings = AdapterSettings { batch_size: 4, ..Default::default() };
    let ext = spawn("persistence", &settings).unwrap();
    let xs = windows(10);
    let preds = ext.predict_batch(&xs).unwrap();
    let reference = Persistence::new(Dims::new(6, 3, 2));
    for (x, p) in xs.iter().zip(&preds) {
        assert!(reference.predict(x).unwrap().bit_eq(p));
    }
    let stats = ext.stats();
    assert_eq!((stats.requests, stats.responses, stats.predictions), (3, 3, 10));
    assert_eq!(ext.shutdown().unwrap(), Some(0));
}

#[test]
fn adapter_fault_fixtures() {
    if !python_available() {
        return;
    }
    let settings = AdapterSettings::default();
    let xs = windows(2);

    let err = spawn("wrong_id", &settings).unwrap().predict_batch(&xs).unwrap_err().to_string();
    assert!(err.contains("protocol violation") && err.contains("expected id 1, got 2"), "{err}");
    assert!(err.contains(r#"\"id\":2"#), "offending message is quoted: {err}");

    let err = spawn("bad_shape", &settings).unwrap().request(&xs).unwrap_err();
    assert!(matches!(err, AdapterError::ProtocolViolation { .. }), "{err}");

    let err = spawn("truncated", &settings).unwrap().request(&xs).unwrap_err();
    assert!(matches!(err, AdapterError::ProtocolViolation { .. }), "{err}");

    let ext = spawn("early_exit", &settings).unwrap();
    ext.request(&xs).unwrap();
    match ext.request(&xs).unwrap_err() {
        AdapterError::AdapterCrashed { code, .. } => assert_eq!(code, Some(7)),
        other => panic!("expected AdapterCrashed, got {other}"),
    }

    let quick = AdapterSettings { handshake_timeout: Duration::from_millis(300), ..Default::default() };
    assert!(matches!(spawn("silent", &quick), Err(AdapterError::HandshakeTimeout(_))));
}

#[test]
fn adapter_failure_exits_3() {
    if !python_available() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 600, 3, 6);
    let config = write_config(dir.path(), "run.json", &small_config(&data));
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--adapter-cmd")
        .arg(adapter_cmd("wrong_id"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("protocol violation"));
}
