//! Orchestration: config files, the end-to-end run, report aggregation,
//! the synthetic demo dataset and the external adapter client.

mod adapter;
mod aggregate;
mod config;
mod run;
mod synth;

use thiserror::Error;

use crate::forecast::ForecastError;
use crate::ingest::IngestError;
use crate::pipeline::PipelineError;
use crate::score::ScoreError;

pub use adapter::{AdapterError, AdapterSettings, ExternalForecaster, Message, SessionStats, PROTOCOL_VERSION};
pub use aggregate::{aggregate, read_report, render_table, write_summary_csv, AggregateError, ModelSummary};
pub use config::{DatasetConfig, ModelConfig, OutputConfig, Overrides, RunConfig, WindowCounts};
pub use run::{prepare_data, run, PreparedData};
pub use synth::{synth_dataset, write_synth_csv, SynthOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: {source}")]
    Adapter {
        stage: &'static str,
        #[source]
        source: AdapterError,
    },
    #[error("{stage}: {message}")]
    Internal { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Data { .. } => 2,
            Self::Adapter { .. } => 3,
            Self::Internal { .. } => 4,
        }
    }

    pub fn ingest(e: IngestError) -> Self {
        Self::Data { stage: "ingest", message: format!("{}: {e}", error_name(&e)) }
    }

    pub fn pipeline(e: PipelineError) -> Self {
        Self::Data { stage: "pipeline", message: e.to_string() }
    }

    pub fn forecast(stage: &'static str, e: ForecastError) -> Self {
        match e {
            ForecastError::Adapter(source) => Self::Adapter { stage, source },
            ForecastError::InvalidConfig(m) => Self::Config(m),
            other => Self::Internal { stage, message: other.to_string() },
        }
    }

    pub fn score(e: ScoreError) -> Self {
        match e {
            ScoreError::Prediction { source, .. } => Self::forecast("score", source),
            other => Self::Internal { stage: "score", message: other.to_string() },
        }
    }

    pub fn io(stage: &'static str, what: &str, e: impl std::fmt::Display) -> Self {
        Self::Internal { stage, message: format!("{what}: {e}") }
    }
}

fn error_name(e: &IngestError) -> &'static str {
    match e {
        IngestError::FileNotFound(_) => "FileNotFound",
        IngestError::Io { .. } => "Io",
        IngestError::Parse { .. } => "Parse",
        IngestError::NonMonotoneTimestamps { .. } => "NonMonotoneTimestamps",
        IngestError::AllRowsDropped { .. } => "AllRowsDropped",
    }
}
