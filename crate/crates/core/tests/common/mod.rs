#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cpsrobust::cli::{write_synth_csv, RunConfig, SynthOptions};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpsrobust"))
}

pub fn adapter_script() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/adapter.py")
}

pub fn adapter_cmd(mode: &str) -> String {
    format!("python3 '{}' {mode}", adapter_script().display())
}

pub fn python_available() -> bool {
    Command::new("python3").arg("--version").output().map(|o| o.status.success()).unwrap_or(false)
}

pub fn write_synth(dir: &Path, rows: usize, continuous: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("synth_{rows}_{continuous}_{seed}.csv"));
    let opts = SynthOptions { rows, continuous, seed, ..Default::default() };
    write_synth_csv(&opts, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

/// Small, fast configuration on a synthetic table.
pub fn small_config(data: &Path) -> RunConfig {
    let mut cfg = RunConfig::for_dataset(data);
    cfg.dataset.load.timestamp_column = Some("time".into());
    cfg.t = 24;
    cfg.horizon = 8;
    cfg.windows.train = 128;
    cfg.windows.val = 32;
    cfg.windows.test = 16;
    cfg.severity_step = 0.05;
    cfg.train.max_epochs = 5;
    cfg.model.hyper.moving_average_kernel = 5;
    cfg.model.hyper.hidden_width = 16;
    cfg
}

pub fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
