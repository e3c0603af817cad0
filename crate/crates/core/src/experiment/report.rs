use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ExperimentError, Stage};
use crate::corpus::DroppedVerse;
use crate::metrics::BUCKETS;
use crate::pathgen::ConfigKind;
use crate::seq2seq::{EpochRecord, ModelConfig};

/// Metrics of one trained model on the eval path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: String,
    pub kind: ConfigKind,
    pub data: usize,
    pub seed: u64,
    pub paths: usize,
    pub unique_sentences: usize,
    pub bleu: f64,
    pub bp: f64,
    pub precisions: [f64; 4],
    pub entropy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// One F1 per frequency bucket.
    pub f1: Vec<f64>,
}

/// `Single` is reported bare; other kinds carry their data count.
pub fn config_label(kind: ConfigKind, data: usize) -> String {
    match kind {
        ConfigKind::Single => "Single".to_string(),
        k => format!("{k}@{data}"),
    }
}

pub fn csv_header() -> String {
    let mut h = String::from("config,paths,unique_sentences,bleu,bp,p1,p2,p3,p4,entropy,ci_low,ci_high");
    for b in 0..BUCKETS.len() {
        write!(h, ",f1_bucket{b}").unwrap();
    }
    h.push_str(",seed");
    h
}

impl EvalReport {
    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.config,
            self.paths,
            self.unique_sentences,
            self.bleu,
            self.bp,
            self.precisions[0],
            self.precisions[1],
            self.precisions[2],
            self.precisions[3],
            self.entropy,
            self.ci_low,
            self.ci_high
        );
        for f in &self.f1 {
            write!(row, ",{f:.6}").unwrap();
        }
        write!(row, ",{}", self.seed).unwrap();
        row
    }
}

pub fn report_csv<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIdentity {
    pub id: String,
    pub source: String,
    pub sha256: String,
    pub verses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub split: u64,
    pub budget: u64,
    pub model: u64,
    pub bootstrap: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpeRecord {
    pub shared: bool,
    pub requested_merges: usize,
    /// Learned merges per table (`"*"` for the shared table).
    pub learned_merges: BTreeMap<String, usize>,
    pub vocab_cap: usize,
    pub vocab_size: usize,
    pub vocab_hash: String,
}

/// Everything needed to re-run one grid point, plus its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub label: String,
    pub kind: ConfigKind,
    pub data: usize,
    pub members: Vec<String>,
    pub paths: Vec<String>,
    pub path_policy: String,
    pub eval_path: String,
    pub seeds: SeedRecord,
    pub corpora: Vec<CorpusIdentity>,
    pub aligned_keys: usize,
    pub dropped: Vec<DroppedVerse>,
    pub split_sizes: (usize, usize, usize),
    pub budget: Option<usize>,
    pub train_pairs: usize,
    pub bpe: BpeRecord,
    pub model: ModelConfig,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub report: EvalReport,
    /// Choices the method leaves open, with the value used.
    pub decisions: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Aggregated grid table and long-format BLEU curve data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub grid_csv: String,
    pub curve_csv: String,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One row per (kind, data), averaged over seeds, BLEU scaled to 0-100.
pub fn emit_tables(manifests: &[RunManifest]) -> Result<Tables, ExperimentError> {
    let fail = |m: String| ExperimentError::new(Stage::Tables, m);
    let first = manifests.first().ok_or_else(|| fail("no manifests given".into()))?;
    let eval_paths: BTreeSet<&str> = manifests.iter().map(|m| m.eval_path.as_str()).collect();
    if eval_paths.len() > 1 {
        return Err(fail(format!(
            "manifests mix eval paths: {}",
            eval_paths.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    let mut groups: BTreeMap<(ConfigKind, usize), Vec<&RunManifest>> = BTreeMap::new();
    for m in manifests {
        groups.entry((m.kind, m.data)).or_default().push(m);
    }

    let mut grid = String::from(
        "eval_path,kind,data,config,seeds,paths,unique_sentences,bleu,bleu_sd,entropy,ci_low,ci_high,f1_bucket1\n",
    );
    let mut curve = String::from("kind,data,seed,bleu\n");
    for ((kind, data), ms) in &groups {
        let col = |f: &dyn Fn(&EvalReport) -> f64| ms.iter().map(|m| f(&m.report)).collect::<Vec<_>>();
        let bleu = col(&|r| 100.0 * r.bleu);
        let r0 = &ms[0].report;
        writeln!(
            grid,
            "{},{kind},{data},{},{},{},{},{:.2},{:.2},{:.4},{:.4},{:.4},{:.4}",
            first.eval_path,
            r0.config,
            ms.len(),
            r0.paths,
            r0.unique_sentences,
            mean(&bleu),
            sample_sd(&bleu),
            mean(&col(&|r| r.entropy)),
            mean(&col(&|r| r.ci_low)),
            mean(&col(&|r| r.ci_high)),
            mean(&col(&|r| r.f1[1])),
        )
        .unwrap();
        let mut per_seed: Vec<(u64, f64)> = ms.iter().map(|m| (m.report.seed, 100.0 * m.report.bleu)).collect();
        per_seed.sort_by_key(|p| p.0);
        for (seed, b) in per_seed {
            writeln!(curve, "{kind},{data},{seed},{b:.2}").unwrap();
        }
    }
    Ok(Tables {
        grid_csv: grid,
        curve_csv: curve,
    })
}
