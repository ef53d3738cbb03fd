//! Pipeline configuration, orchestration and chart output.

pub mod charts;
pub mod config;
pub mod pipeline;
pub mod svg;

use thiserror::Error;

pub use charts::{render_reports, slug};
pub use config::{ConfigError, IssueSource, PipelineConfig};
pub use pipeline::{
    run_pipeline, write_reports, Manifest, PipelineError, RunSummary, RunWriter, Stages,
};
pub use svg::{render_chart, ChartError, ChartKind, ChartSpec, Series, ValueFormat};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed report: {0}")]
    Format(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
