//! Severity-parameterized disturbance scenarios.
//!
//! Every transform maps a window `(x, y)` and a severity `s ∈ [0, 1]` to a
//! disturbed window of the same shape. Severity 0 is the identity, bit for
//! bit. Only the scenario's affected sensors change, and the target is left
//! alone except by `MissingData`, which shifts the forecast origin back in
//! time. Disturbed regions are anchored at the most recent input steps.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::{SensorKind, SensorMeta};
use crate::matrix::Matrix;
use crate::pipeline::WindowSample;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DisturbanceKind {
    Drift,
    DyingSignal,
    Noise,
    FlatSensor,
    MissingData,
    FasterSampling,
    SlowerSampling,
    Outlier,
    WrongDiscreteValue,
    OscillatingSensor,
}

/// Which sensors a scenario may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorTarget {
    Continuous,
    Discrete,
    /// Time-axis operation over every sensor at once.
    All,
}

impl DisturbanceKind {
    pub const ALL: [DisturbanceKind; 10] = [
        DisturbanceKind::Drift,
        DisturbanceKind::DyingSignal,
        DisturbanceKind::Noise,
        DisturbanceKind::FlatSensor,
        DisturbanceKind::MissingData,
        DisturbanceKind::FasterSampling,
        DisturbanceKind::SlowerSampling,
        DisturbanceKind::Outlier,
        DisturbanceKind::WrongDiscreteValue,
        DisturbanceKind::OscillatingSensor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Drift => "Drift",
            Self::DyingSignal => "DyingSignal",
            Self::Noise => "Noise",
            Self::FlatSensor => "FlatSensor",
            Self::MissingData => "MissingData",
            Self::FasterSampling => "FasterSampling",
            Self::SlowerSampling => "SlowerSampling",
            Self::Outlier => "Outlier",
            Self::WrongDiscreteValue => "WrongDiscreteValue",
            Self::OscillatingSensor => "OscillatingSensor",
        }
    }

    pub fn target(self) -> SensorTarget {
        match self {
            Self::WrongDiscreteValue | Self::OscillatingSensor => SensorTarget::Discrete,
            Self::MissingData => SensorTarget::All,
            _ => SensorTarget::Continuous,
        }
    }

    pub fn preserves_target(self) -> bool {
        self != Self::MissingData
    }

    fn eligible(self, meta: &SensorMeta) -> bool {
        match self {
            Self::OscillatingSensor => meta.is_discrete() && meta.observed_states.len() >= 2,
            _ => match self.target() {
                SensorTarget::Continuous => meta.kind == SensorKind::Continuous,
                SensorTarget::Discrete => meta.kind == SensorKind::Discrete,
                SensorTarget::All => true,
            },
        }
    }
}

impl fmt::Display for DisturbanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for DisturbanceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown disturbance scenario {s:?}"))
    }
}

/// Intensity constants. Magnitudes are in standardized units; caps are
/// fractions of the input length `t` unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceParams {
    /// Percentage of eligible sensors affected, rounded up.
    pub affected_percent: u32,
    pub offset_max: f64,
    pub noise_scale: f64,
    pub spike_magnitude: f64,
    /// Hold, invalid-state and oscillation length cap as a fraction of `t`.
    pub hold_cap_frac: f64,
    /// Faster/slower sampling region cap as a fraction of `t`.
    pub sampling_cap_frac: f64,
    /// Maximum number of deleted steps for MissingData; `None` means the horizon.
    pub missing_cap: Option<usize>,
}

impl Default for DisturbanceParams {
    fn default() -> Self {
        Self {
            affected_percent: 10,
            offset_max: 1.0,
            noise_scale: 1.0,
            spike_magnitude: 8.0,
            hold_cap_frac: 1.0,
            sampling_cap_frac: 0.5,
            missing_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbedSample {
    pub x: Matrix,
    pub y: Matrix,
    pub severity: f64,
}

impl DisturbedSample {
    fn unchanged(sample_x: &Matrix, sample_y: &Matrix, severity: f64) -> Self {
        Self { x: sample_x.clone(), y: sample_y.clone(), severity }
    }
}

/// `ceil(percent · eligible / 100)` sensors chosen by `(seed, kind)`, sorted.
/// MissingData always covers every sensor.
pub fn select_affected(meta: &[SensorMeta], kind: DisturbanceKind, seed: u64) -> Vec<usize> {
    select_affected_with(meta, kind, seed, DisturbanceParams::default().affected_percent)
}

pub fn select_affected_with(
    meta: &[SensorMeta],
    kind: DisturbanceKind,
    seed: u64,
    percent: u32,
) -> Vec<usize> {
    let eligible: Vec<usize> = meta.iter().filter(|m| kind.eligible(m)).map(|m| m.index).collect();
    if kind.target() == SensorTarget::All {
        return eligible;
    }
    let count = (eligible.len() * percent as usize).div_ceil(100).min(eligible.len());
    if count == 0 {
        return Vec::new();
    }
    let mut rng = rng::stream(seed, &format!("affected/{kind}"));
    let mut chosen: Vec<usize> =
        index::sample(&mut rng, eligible.len(), count).into_iter().map(|i| eligible[i]).collect();
    chosen.sort_unstable();
    chosen
}

/// A scenario bound to a dataset: the affected sensors plus everything a
/// transform needs that does not depend on the individual window.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: DisturbanceKind,
    pub affected: Vec<usize>,
    pub seed: u64,
    pub params: DisturbanceParams,
    pub t: usize,
    pub horizon: usize,
    /// Standardized invalid state per affected sensor (WrongDiscreteValue).
    pub invalid_values: Vec<f64>,
    /// Standardized (more frequent, less frequent) valid states per affected
    /// sensor (OscillatingSensor).
    pub oscillation_states: Vec<(f64, f64)>,
}

impl Scenario {
    /// `meta` must carry training statistics so raw discrete states can be
    /// mapped into standardized space.
    pub fn prepare(
        kind: DisturbanceKind,
        meta: &[SensorMeta],
        params: &DisturbanceParams,
        seed: u64,
        t: usize,
        horizon: usize,
    ) -> Self {
        let affected = select_affected_with(meta, kind, seed, params.affected_percent);
        let invalid_values = match kind {
            DisturbanceKind::WrongDiscreteValue => {
                affected.iter().map(|&j| meta[j].standardize(invalid_state(&meta[j].observed_states))).collect()
            }
            _ => Vec::new(),
        };
        let oscillation_states = match kind {
            DisturbanceKind::OscillatingSensor => affected
                .iter()
                .map(|&j| {
                    let (a, b) = dominant_states(&meta[j]);
                    (meta[j].standardize(a), meta[j].standardize(b))
                })
                .collect(),
            _ => Vec::new(),
        };
        Self { kind, affected, seed, params: params.clone(), t, horizon, invalid_values, oscillation_states }
    }

    pub fn is_applicable(&self) -> bool {
        !self.affected.is_empty()
    }

    /// Per-window state. Noise is drawn here once and reused for every severity.
    pub fn context(&self, sample_index: usize) -> DisturbanceContext<'_> {
        let frozen_noise = (self.kind == DisturbanceKind::Noise).then(|| {
            let mut rng = rng::stream(self.seed, &format!("noise/{sample_index}"));
            let cols = self.affected.len();
            let data = (0..self.t * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
            Matrix::from_vec(self.t, cols, data)
        });
        DisturbanceContext { scenario: self, frozen_noise }
    }

    pub fn apply(&self, s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
        match self.kind {
            DisturbanceKind::Drift => drift(s, x, y, ctx),
            DisturbanceKind::DyingSignal => dying_signal(s, x, y, ctx),
            DisturbanceKind::Noise => noise(s, x, y, ctx),
            DisturbanceKind::FlatSensor => flat_sensor(s, x, y, ctx),
            DisturbanceKind::MissingData => missing_data(s, x, y, ctx),
            DisturbanceKind::FasterSampling => faster_sampling(s, x, y, ctx),
            DisturbanceKind::SlowerSampling => slower_sampling(s, x, y, ctx),
            DisturbanceKind::Outlier => outlier(s, x, y, ctx),
            DisturbanceKind::WrongDiscreteValue => wrong_discrete_value(s, x, y, ctx),
            DisturbanceKind::OscillatingSensor => oscillating_sensor(s, x, y, ctx),
        }
    }

    /// Largest number of deleted steps for MissingData.
    pub fn missing_cap(&self) -> usize {
        self.params.missing_cap.unwrap_or(self.horizon).min(self.horizon).min(self.t.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct DisturbanceContext<'a> {
    pub scenario: &'a Scenario,
    /// Standard normal draws, `t × |affected|` (Noise only).
    pub frozen_noise: Option<Matrix>,
}

/// Something that disturbs windows at a given severity. The scorer prepares
/// one `State` per window and then sweeps severities over it.
pub trait Disturbance: Sync {
    type State: Send + Sync;

    fn preserves_target(&self) -> bool;

    fn sample_state(&self, index: usize, sample: &WindowSample) -> Self::State;

    fn disturb(&self, severity: f64, sample: &WindowSample, state: &Self::State) -> DisturbedSample;
}

impl Disturbance for Scenario {
    type State = Option<Matrix>;

    fn preserves_target(&self) -> bool {
        self.kind.preserves_target()
    }

    fn sample_state(&self, index: usize, _sample: &WindowSample) -> Option<Matrix> {
        self.context(index).frozen_noise
    }

    fn disturb(&self, severity: f64, sample: &WindowSample, state: &Option<Matrix>) -> DisturbedSample {
        let ctx = DisturbanceContext { scenario: self, frozen_noise: state.clone() };
        self.apply(severity, &sample.x, &sample.y, &ctx)
    }
}

/// Highest observed state plus the median gap between consecutive states
/// (gap 1 for a single state).
pub fn invalid_state(states: &[f64]) -> f64 {
    let max = states.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut gaps: Vec<f64> = states.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return max + 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let median = if gaps.len() % 2 == 1 { gaps[mid] } else { 0.5 * (gaps[mid - 1] + gaps[mid]) };
    max + median
}

/// The two most frequent raw states, ties broken by ascending value.
pub fn dominant_states(meta: &SensorMeta) -> (f64, f64) {
    let mut order: Vec<usize> = (0..meta.observed_states.len()).collect();
    order.sort_by(|&a, &b| {
        meta.state_counts[b]
            .cmp(&meta.state_counts[a])
            .then(meta.observed_states[a].total_cmp(&meta.observed_states[b]))
    });
    (meta.observed_states[order[0]], meta.observed_states[order[1]])
}

/// Round half away from zero, clamped to `[0, cap]`.
fn steps(s: f64, cap: f64) -> usize {
    (s * cap).round().max(0.0) as usize
}

fn hold_len(s: f64, ctx: &DisturbanceContext<'_>, t: usize) -> usize {
    steps(s, ctx.scenario.params.hold_cap_frac * t as f64).min(t)
}

fn map_affected(
    s: f64,
    x: &Matrix,
    y: &Matrix,
    ctx: &DisturbanceContext<'_>,
    mut f: impl FnMut(usize, usize, &[f64], &mut Matrix),
) -> DisturbedSample {
    let mut out = x.clone();
    for (k, &j) in ctx.scenario.affected.iter().enumerate() {
        let original = x.column(j);
        f(k, j, &original, &mut out);
    }
    DisturbedSample { x: out, y: y.clone(), severity: s }
}

pub fn drift(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    if s == 0.0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    let offset = s * ctx.scenario.params.offset_max;
    map_affected(s, x, y, ctx, |_, j, _, out| {
        for r in 0..out.rows() {
            out[(r, j)] += offset;
        }
    })
}

pub fn dying_signal(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    if s == 0.0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    let factor = 1.0 - s;
    map_affected(s, x, y, ctx, |_, j, _, out| {
        for r in 0..out.rows() {
            out[(r, j)] *= factor;
        }
    })
}

pub fn noise(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    if s == 0.0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    let z = ctx.frozen_noise.as_ref().expect("noise context carries frozen draws");
    let scale = s * ctx.scenario.params.noise_scale;
    map_affected(s, x, y, ctx, |k, j, _, out| {
        for r in 0..out.rows() {
            out[(r, j)] += scale * z[(r, k)];
        }
    })
}

pub fn flat_sensor(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    let t = x.rows();
    let len = hold_len(s, ctx, t);
    if len == 0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    map_affected(s, x, y, ctx, |_, j, original, out| {
        let held = original[t - len];
        for r in t - len..t {
            out[(r, j)] = held;
        }
    })
}

/// Deletes the `k` most recent input rows. The remaining rows are
/// front-padded with the earliest one, and the deleted rows become the head
/// of the target, so the forecast starts right after the last observed step.
pub fn missing_data(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    let k = steps(s, ctx.scenario.missing_cap() as f64).min(ctx.scenario.missing_cap());
    missing_data_rows(k, x, y, s)
}

pub fn missing_data_rows(k: usize, x: &Matrix, y: &Matrix, severity: f64) -> DisturbedSample {
    if k == 0 {
        return DisturbedSample::unchanged(x, y, severity);
    }
    let (t, horizon) = (x.rows(), y.rows());
    assert!(k < t && k <= horizon, "missing-data length {k} exceeds window");
    let mut xd = Matrix::zeros(t, x.cols());
    for r in 0..t {
        let src = r.saturating_sub(k);
        xd.row_mut(r).copy_from_slice(x.row(src));
    }
    let mut yd = Matrix::zeros(horizon, y.cols());
    for r in 0..horizon {
        let row = if r < k { x.row(t - k + r) } else { y.row(r - k) };
        yd.row_mut(r).copy_from_slice(row);
    }
    DisturbedSample { x: xd, y: yd, severity }
}

/// Double-rate playback over `len` steps ending `len / 2` steps before the
/// window end, then a hold until time realigns.
pub fn faster_sampling(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    let t = x.rows();
    let cap = ctx.scenario.params.sampling_cap_frac * t as f64;
    let len = 2 * steps(s, cap / 2.0);
    // region of 3·len/2 steps must fit inside the window
    let len = len.min(2 * t / 3 / 2 * 2);
    faster_sampling_len(len, s, x, y, &ctx.scenario.affected)
}

pub fn faster_sampling_len(len: usize, s: f64, x: &Matrix, y: &Matrix, affected: &[usize]) -> DisturbedSample {
    debug_assert!(len.is_multiple_of(2));
    let t = x.rows();
    if len == 0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    let start = t - 3 * len / 2;
    let mut out = x.clone();
    for &j in affected {
        let orig = x.column(j);
        for i in 0..len {
            let base = start + i / 2;
            out[(start + i, j)] = if i % 2 == 0 { orig[base] } else { 0.5 * (orig[base] + orig[base + 1]) };
        }
        let held = orig[start + len / 2];
        for r in start + len..start + 3 * len / 2 {
            out[(r, j)] = held;
        }
    }
    DisturbedSample { x: out, y: y.clone(), severity: s }
}

/// Half-rate sample-and-hold over the last `len` steps.
pub fn slower_sampling(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    let t = x.rows();
    let len = steps(s, ctx.scenario.params.sampling_cap_frac * t as f64).min(t);
    slower_sampling_len(len, s, x, y, &ctx.scenario.affected)
}

pub fn slower_sampling_len(len: usize, s: f64, x: &Matrix, y: &Matrix, affected: &[usize]) -> DisturbedSample {
    let t = x.rows();
    if len == 0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    let start = t - len;
    let mut out = x.clone();
    for &j in affected {
        for i in 0..len {
            out[(start + i, j)] = x[((start + 2 * (i / 2)).min(t - 1), j)];
        }
    }
    DisturbedSample { x: out, y: y.clone(), severity: s }
}

pub fn outlier_step(t: usize) -> usize {
    3 * t / 4
}

pub fn outlier(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    if s == 0.0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    let p = outlier_step(x.rows());
    let spike = s * ctx.scenario.params.spike_magnitude;
    map_affected(s, x, y, ctx, |_, j, _, out| out[(p, j)] += spike)
}

pub fn wrong_discrete_value(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    let t = x.rows();
    let len = hold_len(s, ctx, t);
    if len == 0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    map_affected(s, x, y, ctx, |k, j, _, out| {
        let v = ctx.scenario.invalid_values[k];
        for r in t - len..t {
            out[(r, j)] = v;
        }
    })
}

pub fn oscillating_sensor(s: f64, x: &Matrix, y: &Matrix, ctx: &DisturbanceContext<'_>) -> DisturbedSample {
    let t = x.rows();
    let len = hold_len(s, ctx, t);
    if len == 0 {
        return DisturbedSample::unchanged(x, y, s);
    }
    map_affected(s, x, y, ctx, |k, j, _, out| {
        let (first, second) = ctx.scenario.oscillation_states[k];
        for i in 0..len {
            out[(t - len + i, j)] = if i % 2 == 0 { first } else { second };
        }
    })
}
