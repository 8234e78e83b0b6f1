//! Temporal splitting with purge gaps, training-split standardization and
//! seeded window sampling.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng;

pub const STD_GUARD: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("invalid split specification: {0}")]
    InvalidSplit(String),
    #[error("{role:?} segment too small: {rows} rows, need at least {needed}")]
    SegmentTooSmall { role: SegmentRole, rows: usize, needed: usize },
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub purge_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_frac: 0.70, val_frac: 0.15, test_frac: 0.15, purge_frac: 0.01 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(PipelineError::InvalidSplit("fractions must be positive".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(PipelineError::InvalidSplit("fractions must sum to 1".into()));
        }
        if !(0.0..=0.05).contains(&self.purge_frac) {
            return Err(PipelineError::InvalidSplit("purge_frac must lie in [0, 0.05]".into()));
        }
        Ok(())
    }

    /// Rows discarded after Train and after Val.
    pub fn purge_rows(&self, rows: usize) -> usize {
        if self.purge_frac == 0.0 {
            0
        } else {
            ((self.purge_frac * rows as f64).round() as usize).max(1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentRole {
    Train,
    Val,
    Test,
}

/// Half-open row interval `[start, end)` of the standardized table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Segment,
    pub val: Segment,
    pub test: Segment,
    /// Realized purge gap in rows.
    pub purge: usize,
}

impl Splits {
    pub fn segments(&self) -> [Segment; 3] {
        [self.train, self.val, self.test]
    }
}

// Guards against 0.7 * 100 landing just below an integer.
fn floor_frac(frac: f64, rows: usize) -> usize {
    (frac * rows as f64 + 1e-9).floor() as usize
}

/// Splits `rows` into Train, Val and Test with purge gaps consumed between
/// them. Each segment must hold at least `min_segment_rows` rows.
pub fn split_time(
    rows: usize,
    spec: &SplitSpec,
    min_segment_rows: usize,
) -> Result<Splits, PipelineError> {
    spec.validate()?;
    let purge = spec.purge_rows(rows);
    let train_end = floor_frac(spec.train_frac, rows).min(rows);
    let val_start = (train_end + purge).min(rows);
    let val_end = (val_start + floor_frac(spec.val_frac, rows)).min(rows);
    let test_start = (val_end + purge).min(rows);

    let splits = Splits {
        train: Segment { role: SegmentRole::Train, start: 0, end: train_end },
        val: Segment { role: SegmentRole::Val, start: val_start, end: val_end },
        test: Segment { role: SegmentRole::Test, start: test_start, end: rows },
        purge,
    };
    for seg in splits.segments() {
        if seg.len() < min_segment_rows.max(1) {
            return Err(PipelineError::SegmentTooSmall {
                role: seg.role,
                rows: seg.len(),
                needed: min_segment_rows.max(1),
            });
        }
    }
    Ok(splits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns whose training std fell below the guard and were given std 1.
    pub guarded: Vec<bool>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self { means: vec![0.0; n], stds: vec![1.0; n], guarded: vec![false; n] }
    }

    /// Population mean and standard deviation over the rows of `train`.
    pub fn fit(table: &Matrix, train: &Segment) -> Self {
        assert!(!train.is_empty(), "cannot fit a standardizer on an empty segment");
        let n = table.cols();
        let count = train.len() as f64;
        let mut means = vec![0.0; n];
        for r in train.start..train.end {
            for (m, v) in means.iter_mut().zip(table.row(r)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= count);
        let mut vars = vec![0.0; n];
        for r in train.start..train.end {
            for ((acc, v), m) in vars.iter_mut().zip(table.row(r)).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
        let mut guarded = vec![false; n];
        let stds = vars
            .iter()
            .zip(guarded.iter_mut())
            .map(|(var, g)| {
                let sd = (var / count).sqrt();
                if sd < STD_GUARD {
                    *g = true;
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { means, stds, guarded }
    }

    pub fn apply(&self, table: &Matrix) -> Result<Matrix, PipelineError> {
        if table.cols() != self.means.len() {
            return Err(PipelineError::DimensionMismatch {
                expected: self.means.len(),
                got: table.cols(),
            });
        }
        let mut out = table.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        Ok(out)
    }
}

/// Paired input `x` (`t × n`) and target `y` (`horizon × n`) cut from
/// consecutive rows starting at `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub x: Matrix,
    pub y: Matrix,
    pub origin: usize,
}

impl WindowSample {
    pub fn from_table(table: &Matrix, origin: usize, t: usize, horizon: usize) -> Self {
        Self {
            x: table.slice_rows(origin, origin + t),
            y: table.slice_rows(origin + t, origin + t + horizon),
            origin,
        }
    }

    pub fn t(&self) -> usize {
        self.x.rows()
    }

    pub fn horizon(&self) -> usize {
        self.y.rows()
    }

    /// The last `k` input rows, i.e. the context immediately preceding `y`.
    pub fn context_tail(&self, k: usize) -> Matrix {
        let t = self.t();
        self.x.slice_rows(t - k.min(t), t)
    }
}

/// Draws `n_windows` window start rows inside `seg`, sorted ascending.
/// Starts are distinct whenever the segment admits that many.
pub fn sample_starts(
    seg: &Segment,
    t: usize,
    horizon: usize,
    n_windows: usize,
    seed: u64,
) -> Result<Vec<usize>, PipelineError> {
    let span = t + horizon;
    if seg.len() < span {
        return Err(PipelineError::SegmentTooSmall { role: seg.role, rows: seg.len(), needed: span });
    }
    let candidates = seg.len() - span + 1;
    let mut rng = rng::stream(seed, &format!("windows/{:?}", seg.role));
    let mut starts: Vec<usize> = if n_windows <= candidates {
        index::sample(&mut rng, candidates, n_windows).into_vec()
    } else {
        (0..n_windows).map(|_| rng.random_range(0..candidates)).collect()
    };
    starts.sort_unstable();
    Ok(starts.into_iter().map(|s| seg.start + s).collect())
}

pub fn sample_windows(
    table: &Matrix,
    seg: &Segment,
    t: usize,
    horizon: usize,
    n_windows: usize,
    seed: u64,
) -> Result<Vec<WindowSample>, PipelineError> {
    Ok(sample_starts(seg, t, horizon, n_windows, seed)?
        .into_iter()
        .map(|origin| WindowSample::from_table(table, origin, t, horizon))
        .collect())
}
