//! Experiment configuration files.
//!
//! ```toml
//! [experiment]
//! name = "demo"
//! kinds = ["Single", "Vmix"]
//! data = [1, 6]          # or: points = ["Single@1", "Vsrc@5", "Vmix@8"]
//! seeds = [1, 2]
//! eval_src = "f0"
//! eval_tgt = "e0"
//! path_policy = "all_pairs"
//! budget = 1200          # optional; pairs per grid point
//! budget_by_data = { "5" = 4800 }   # optional; overrides `budget` per data count
//! split_seed = 1
//! budget_seed = 1
//!
//! [corpora]
//! dir = "corpora"        # relative to the config file; holds <id>.txt
//! sources = ["f0", "f1", "f2"]
//! targets = ["e0", "e1", "e2"]
//!
//! [bpe]
//! num_merges = 400
//! vocab_cap = 4000
//! shared = true
//!
//! [model]                # any ModelConfig field; omitted ones take the paper values
//! embed_dim = 32
//!
//! [eval]
//! num_bootstrap = 1000
//! alpha = 0.05
//! bootstrap_seed = 1
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ParaphraseId;
use crate::metrics::MIN_BOOTSTRAP;
use crate::pathgen::{ConfigKind, PathPolicy, TranslationPath};
use crate::seq2seq::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentSection,
    pub corpora: CorporaSection,
    #[serde(default)]
    pub bpe: BpeSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub kinds: Vec<ConfigKind>,
    #[serde(default)]
    pub data: Vec<usize>,
    /// Explicit grid cells; replaces the `kinds x data` product when non-empty.
    #[serde(default)]
    pub points: Vec<PointSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_src")]
    pub eval_src: ParaphraseId,
    #[serde(default = "default_tgt")]
    pub eval_tgt: ParaphraseId,
    #[serde(default)]
    pub path_policy: PathPolicy,
    #[serde(default)]
    pub budget: Option<usize>,
    /// Budget per data count, keyed by the count written as a string.
    #[serde(default)]
    pub budget_by_data: BTreeMap<String, usize>,
    #[serde(default = "default_seed")]
    pub split_seed: u64,
    #[serde(default = "default_seed")]
    pub budget_seed: u64,
}

/// One grid cell, written `Kind@data`, e.g. `Vmix@8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PointSpec {
    pub kind: ConfigKind,
    pub data: usize,
}

impl fmt::Display for PointSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.data)
    }
}

impl FromStr for PointSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, data) = s
            .split_once('@')
            .ok_or_else(|| format!("grid point `{s}` is not of the form Kind@data"))?;
        Ok(PointSpec {
            kind: kind.parse().map_err(|e: crate::pathgen::PathError| e.to_string())?,
            data: data.parse().map_err(|_| format!("grid point `{s}` has a bad data count"))?,
        })
    }
}

impl Serialize for PointSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PointSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorporaSection {
    pub dir: PathBuf,
    pub sources: Vec<ParaphraseId>,
    pub targets: Vec<ParaphraseId>,
    #[serde(default)]
    pub extra: Vec<ParaphraseId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpeSection {
    pub num_merges: usize,
    pub vocab_cap: usize,
    /// One merge table for all languages; otherwise one per language.
    pub shared: bool,
}

impl Default for BpeSection {
    fn default() -> Self {
        BpeSection {
            num_merges: 4000,
            vocab_cap: 50_000,
            shared: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub num_bootstrap: usize,
    pub alpha: f64,
    pub bootstrap_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            num_bootstrap: 1000,
            alpha: 0.05,
            bootstrap_seed: 1,
        }
    }
}

fn default_name() -> String {
    "experiment".into()
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_seed() -> u64 {
    1
}
fn default_src() -> ParaphraseId {
    ParaphraseId::new("f", 0).unwrap()
}
fn default_tgt() -> ParaphraseId {
    ParaphraseId::new("e", 0).unwrap()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = RunConfig::parse(&text)?;
        if cfg.corpora.dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.corpora.dir = base.join(&cfg.corpora.dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn eval_path(&self) -> TranslationPath {
        TranslationPath::new(self.experiment.eval_src.clone(), self.experiment.eval_tgt.clone())
    }

    /// Every corpus the grid may touch, sources then targets then extras.
    pub fn corpus_ids(&self) -> Vec<ParaphraseId> {
        let mut ids = Vec::new();
        for id in self
            .corpora
            .sources
            .iter()
            .chain(&self.corpora.targets)
            .chain(&self.corpora.extra)
        {
            if !ids.contains(id) {
                ids.push(id.clone());
            }
        }
        ids
    }

    /// Grid cells in sorted order, without seeds.
    pub fn cells(&self) -> Vec<PointSpec> {
        let e = &self.experiment;
        let mut cells: Vec<PointSpec> = if e.points.is_empty() {
            e.kinds
                .iter()
                .flat_map(|&kind| e.data.iter().map(move |&data| PointSpec { kind, data }))
                .collect()
        } else {
            e.points.clone()
        };
        cells.sort();
        cells.dedup();
        cells
    }

    /// Explicit budget for cells with `data` corpora, if the config fixes one.
    pub fn budget_for(&self, data: usize) -> Option<usize> {
        self.experiment
            .budget_by_data
            .get(&data.to_string())
            .copied()
            .or(self.experiment.budget)
    }

    pub fn validate(&self) -> Result<(), String> {
        let e = &self.experiment;
        let product = !e.kinds.is_empty() || !e.data.is_empty();
        if product == !e.points.is_empty() {
            return Err("give either experiment.kinds and experiment.data, or experiment.points".into());
        }
        if product && (e.kinds.is_empty() || e.data.is_empty()) {
            return Err("experiment.kinds and experiment.data must both be non-empty".into());
        }
        if e.seeds.is_empty() {
            return Err("experiment.seeds must be non-empty".into());
        }
        for key in e.budget_by_data.keys() {
            if key.parse::<usize>().is_err() {
                return Err(format!("budget_by_data key `{key}` is not a data count"));
            }
        }
        if e.eval_src == e.eval_tgt {
            return Err("eval_src and eval_tgt must differ".into());
        }
        if self.corpora.sources.first() != Some(&e.eval_src) {
            return Err(format!("corpora.sources must start with the eval source {}", e.eval_src));
        }
        if self.corpora.targets.first() != Some(&e.eval_tgt) {
            return Err(format!("corpora.targets must start with the eval target {}", e.eval_tgt));
        }
        if self.bpe.vocab_cap <= 4 {
            return Err("bpe.vocab_cap must exceed the four special tokens".into());
        }
        if self.eval.num_bootstrap < MIN_BOOTSTRAP {
            return Err(format!("eval.num_bootstrap must be at least {MIN_BOOTSTRAP}"));
        }
        if !(self.eval.alpha > 0.0 && self.eval.alpha < 1.0) {
            return Err("eval.alpha must lie in (0, 1)".into());
        }
        self.model.validate().map_err(|err| err.to_string())
    }
}
