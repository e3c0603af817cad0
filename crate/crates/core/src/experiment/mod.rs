//! End-to-end experiment runs: configuration, the pipeline from raw corpora to
//! metrics, synthetic data, run manifests and summary tables.

mod config;
mod pipeline;
mod report;
mod synth;

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{BpeSection, CorporaSection, EvalSection, ExperimentSection, PointSpec, RunConfig};
pub use pipeline::{
    grid_points, load_corpora, prepare_data, resolve_budgets, run_experiment, run_grid, run_point,
    ArtifactSink, ExperimentOutput, GridPoint, PreparedData, SubwordModel,
};
pub use report::{
    config_label, csv_header, emit_tables, report_csv, BpeRecord, CorpusIdentity, EvalReport,
    RunManifest, SeedRecord, Tables,
};
pub use synth::{generate_synthetic, write_corpora, SynthSpec};

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Align,
    Split,
    Assemble,
    Equalize,
    Bpe,
    Vocab,
    Train,
    Decode,
    Metrics,
    Write,
    Tables,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Align => "align",
            Stage::Split => "split",
            Stage::Assemble => "assemble",
            Stage::Equalize => "equalize",
            Stage::Bpe => "bpe",
            Stage::Vocab => "vocab",
            Stage::Train => "train",
            Stage::Decode => "decode",
            Stage::Metrics => "metrics",
            Stage::Write => "write",
            Stage::Tables => "tables",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("[{stage}] {message}")]
pub struct ExperimentError {
    pub stage: Stage,
    pub message: String,
}

impl ExperimentError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        ExperimentError {
            stage,
            message: message.into(),
        }
    }
}

/// Tags any displayable error with its stage.
pub(crate) fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> ExperimentError {
    move |e| ExperimentError::new(stage, e.to_string())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
