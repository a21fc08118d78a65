//! Experiment orchestration: cross-lingual training corpora, grid runs over
//! (scheme, speech level, seed), aggregation, report tables and the CLI.

mod cli;
mod crosslingual;
mod grid;
mod report;

use thiserror::Error;

pub use cli::cli;
pub use crosslingual::{make_crosslingual_corpus, CrossLingualMode};
pub use grid::{
    aggregate_cells, cell_id, load_cell_reports, manifest_hash, read_predictions, run_grid,
    write_predictions, CellKey, CellReport, CorpusSpec, CrossLingualSpec, EvalModality,
    ExperimentManifest, GridOutcome, PredictionLine, DEFAULT_FEWSHOT_PAIRS, DEFAULT_SPEECH_LEVELS,
};
pub use report::{
    read_aggregate_csv, render_report, write_aggregate_csv, AggregateRow, RenderedReport,
    ReportStyle, ReportTable,
};

use crate::corpus::CorpusError;
use crate::labelcodec::CodecError;
use crate::metrics::MetricsError;
use crate::scheduler::ScheduleError;
use crate::stats::StatsError;
use crate::trainer::TrainError;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("cross-lingual mode {mode} needs {missing}")]
    MissingData { mode: CrossLingualMode, missing: String },
    #[error("languages must be distinct: {0}")]
    LanguageClash(String),
    #[error("missing baseline cell: {0}")]
    MissingBaseline(String),
    #[error("{0}")]
    Other(String),
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> ExpError + '_ {
    move |source| ExpError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn json_err(context: impl Into<String>) -> impl FnOnce(serde_json::Error) -> ExpError {
    let context = context.into();
    move |source| ExpError::Json { context, source }
}
