//! Robustness benchmarking for multivariate time-series forecasters.
//!
//! Windows cut from a standardized sensor table are disturbed by ten
//! realistic fault scenarios at graded severities. The ratio of original to
//! disturbed forecast loss, integrated over severity, gives a per-scenario
//! score; the product over scenarios gives the overall robustness score.

pub mod cli;
pub mod disturb;
pub mod forecast;
pub mod ingest;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod score;

pub use matrix::Matrix;
