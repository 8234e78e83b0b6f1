//! Synthetic demo data: sums of sinusoids with a linear trend and a little
//! noise, plus a binary actuator channel. Not a real plant recording.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::RawDataset;
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub rows: usize,
    /// Continuous channels; one actuator channel is added on top.
    pub continuous: usize,
    pub noise: f64,
    /// Trend slope per 1000 rows.
    pub trend: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { rows: 2000, continuous: 3, noise: 0.05, trend: 0.5, seed: 0 }
    }
}

pub fn synth_dataset(opts: &SynthOptions) -> RawDataset {
    let mut rng = rng::stream(opts.seed, "synth");
    let periods: Vec<[f64; 2]> =
        (0..opts.continuous).map(|_| [rng.random_range(12.0..48.0), rng.random_range(60.0..200.0)]).collect();
    let phases: Vec<f64> = (0..opts.continuous).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let cols = opts.continuous + 1;
    let mut values = Matrix::zeros(opts.rows, cols);
    for r in 0..opts.rows {
        let t = r as f64;
        for j in 0..opts.continuous {
            let [p1, p2] = periods[j];
            let wave = (std::f64::consts::TAU * t / p1 + phases[j]).sin()
                + 0.5 * (std::f64::consts::TAU * t / p2 + 0.5 * phases[j]).sin();
            let e: f64 = StandardNormal.sample(&mut rng);
            values[(r, j)] = wave + opts.trend * t / 1000.0 + opts.noise * e;
        }
        values[(r, opts.continuous)] = if (r / 37) % 3 == 0 { 1.0 } else { 0.0 };
    }
    let mut column_names: Vec<String> = (0..opts.continuous).map(|j| format!("sensor_{j}")).collect();
    column_names.push("actuator".into());
    RawDataset {
        name: "synthetic".into(),
        timestamps: Some((0..opts.rows as i64).collect()),
        timestamp_column: Some("time".into()),
        values,
        column_names,
        provenance: vec![format!("synthetic dataset (seed {}), not measured data", opts.seed)],
    }
}

pub fn write_synth_csv<W: Write>(opts: &SynthOptions, writer: W) -> Result<(), csv::Error> {
    crate::ingest::write_canonical_csv(&synth_dataset(opts), writer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{classify_sensors, read_table, LoadOptions, SensorKind};

    #[test]
    fn deterministic_and_readable() {
        let opts = SynthOptions { rows: 300, ..Default::default() };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_synth_csv(&opts, &mut a).unwrap();
        write_synth_csv(&opts, &mut b).unwrap();
        assert_eq!(a, b);
        let load = LoadOptions { timestamp_column: Some("time".into()), ..Default::default() };
        let ds = read_table(a.as_slice(), "s", &load).unwrap();
        assert_eq!(ds.values.shape(), (300, 4));
        let kinds: Vec<SensorKind> = classify_sensors(&ds, 12).iter().map(|m| m.kind).collect();
        assert_eq!(kinds, [SensorKind::Continuous, SensorKind::Continuous, SensorKind::Continuous, SensorKind::Discrete]);
    }
}
