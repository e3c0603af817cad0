//! Translation paths between paraphrases, path tags, and dataset assembly.
//!
//! Every training example has its source sentence prefixed with two tags naming
//! the source and the target paraphrase, e.g. `__opt_src_f1 __opt_tgt_e0`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AlignedCorpus, ParaphraseId, VerseKey};

pub const SRC_TAG_PREFIX: &str = "__opt_src_";
pub const TGT_TAG_PREFIX: &str = "__opt_tgt_";

#[derive(Debug, Error)]
pub enum PathError {
    #[error("paraphrase {0} is not part of the aligned corpus")]
    UnknownMember(ParaphraseId),
    #[error("corpus {id} has no verse {key}")]
    MissingVerse { id: ParaphraseId, key: VerseKey },
    #[error("verse {key} of {id} contains reserved tag-like token `{token}`")]
    TagInText {
        id: ParaphraseId,
        key: VerseKey,
        token: String,
    },
    #[error("budget {budget} exceeds the {available} available pairs")]
    BudgetTooLarge { budget: usize, available: usize },
    #[error("invalid experiment config: {0}")]
    Config(String),
}

pub fn is_tag(token: &str) -> bool {
    token.starts_with(SRC_TAG_PREFIX) || token.starts_with(TGT_TAG_PREFIX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TagToken {
    pub side: Side,
    pub id: ParaphraseId,
    pub rendered: String,
}

pub fn make_tag(id: &ParaphraseId, side: Side) -> TagToken {
    let prefix = match side {
        Side::Source => SRC_TAG_PREFIX,
        Side::Target => TGT_TAG_PREFIX,
    };
    TagToken {
        side,
        id: id.clone(),
        rendered: format!("{prefix}{id}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TranslationPath {
    pub src: ParaphraseId,
    pub tgt: ParaphraseId,
}

impl TranslationPath {
    pub fn new(src: ParaphraseId, tgt: ParaphraseId) -> Self {
        assert_ne!(src, tgt, "a translation path needs distinct endpoints");
        TranslationPath { src, tgt }
    }

    pub fn src_tag(&self) -> TagToken {
        make_tag(&self.src, Side::Source)
    }

    pub fn tgt_tag(&self) -> TagToken {
        make_tag(&self.tgt, Side::Target)
    }

    pub fn is_cross_lingual(&self) -> bool {
        self.src.lang != self.tgt.lang
    }
}

impl fmt::Display for TranslationPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src, self.tgt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathPolicy {
    #[default]
    AllPairs,
    CrossLingualOnly,
}

impl FromStr for PathPolicy {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all_pairs" => Ok(PathPolicy::AllPairs),
            "cross_lingual_only" => Ok(PathPolicy::CrossLingualOnly),
            other => Err(PathError::Config(format!("unknown path policy `{other}`"))),
        }
    }
}

/// All ordered pairs of distinct members, sorted by (src, tgt).
///
/// Duplicate members are collapsed.
pub fn enumerate_paths(members: &[ParaphraseId], policy: PathPolicy) -> Vec<TranslationPath> {
    let mut sorted = members.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut paths = Vec::with_capacity(sorted.len() * sorted.len().saturating_sub(1));
    for src in &sorted {
        for tgt in &sorted {
            if src == tgt {
                continue;
            }
            if policy == PathPolicy::CrossLingualOnly && src.lang == tgt.lang {
                continue;
            }
            paths.push(TranslationPath::new(src.clone(), tgt.clone()));
        }
    }
    paths
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfigKind {
    Single,
    Vsrc,
    Vtgt,
    Vmix,
    Multilingual,
}

impl fmt::Display for ConfigKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConfigKind::Single => "Single",
            ConfigKind::Vsrc => "Vsrc",
            ConfigKind::Vtgt => "Vtgt",
            ConfigKind::Vmix => "Vmix",
            ConfigKind::Multilingual => "Multilingual",
        };
        f.write_str(s)
    }
}

impl FromStr for ConfigKind {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Single" => Ok(ConfigKind::Single),
            "Vsrc" => Ok(ConfigKind::Vsrc),
            "Vtgt" => Ok(ConfigKind::Vtgt),
            "Vmix" => Ok(ConfigKind::Vmix),
            "Multilingual" => Ok(ConfigKind::Multilingual),
            other => Err(PathError::Config(format!("unknown config kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ConfigKind,
    pub members: Vec<ParaphraseId>,
    pub eval_path: TranslationPath,
    pub budget: Option<usize>,
    pub path_policy: PathPolicy,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PathError> {
        for end in [&self.eval_path.src, &self.eval_path.tgt] {
            if !self.members.contains(end) {
                return Err(PathError::Config(format!(
                    "eval path endpoint {end} is not a member"
                )));
            }
        }
        if self.kind == ConfigKind::Single {
            let mut m = self.members.clone();
            m.sort();
            m.dedup();
            let mut expected = vec![self.eval_path.src.clone(), self.eval_path.tgt.clone()];
            expected.sort();
            if m != expected {
                return Err(PathError::Config(
                    "Single uses exactly the two eval-path paraphrases".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn paths(&self) -> Vec<TranslationPath> {
        enumerate_paths(&self.members, self.path_policy)
    }
}

/// Membership of a grid point holding `data` paraphrase corpora in total.
///
/// `sources` and `targets` list the available source-language and
/// target-language paraphrases with the eval endpoints first; `extra` lists
/// additional corpora (other languages) used by `Multilingual`. A data count of
/// one or two means the eval pair alone.
pub fn grid_members(
    kind: ConfigKind,
    data: usize,
    sources: &[ParaphraseId],
    targets: &[ParaphraseId],
    extra: &[ParaphraseId],
) -> Result<Vec<ParaphraseId>, PathError> {
    let (src0, tgt0) = match (sources.first(), targets.first()) {
        (Some(s), Some(t)) => (s.clone(), t.clone()),
        _ => return Err(PathError::Config("need at least one source and one target paraphrase".into())),
    };
    let n = data.max(2);
    let take = |pool: &[ParaphraseId], k: usize, what: &str| -> Result<Vec<ParaphraseId>, PathError> {
        if k > pool.len() {
            Err(PathError::Config(format!(
                "{kind}@{data} needs {k} {what} paraphrases, only {} available",
                pool.len()
            )))
        } else {
            Ok(pool[..k].to_vec())
        }
    };
    let members = match kind {
        ConfigKind::Single => vec![src0, tgt0],
        ConfigKind::Vsrc => {
            let mut m = take(sources, n - 1, "source")?;
            m.push(tgt0);
            m
        }
        ConfigKind::Vtgt => {
            let mut m = vec![src0];
            m.extend(take(targets, n - 1, "target")?);
            m
        }
        ConfigKind::Vmix => {
            // Odd totals give the extra corpus to the source side.
            let mut m = take(sources, n.div_ceil(2), "source")?;
            m.extend(take(targets, n / 2, "target")?);
            m
        }
        ConfigKind::Multilingual => {
            let mut m = vec![src0, tgt0];
            m.extend(take(extra, n - 2, "extra-language")?);
            m
        }
    };
    Ok(members)
}

/// One training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedPair {
    pub path: TranslationPath,
    pub key: VerseKey,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
}

impl TaggedPair {
    /// Source sentence without its two tags.
    pub fn source_text_tokens(&self) -> &[String] {
        &self.source_tokens[2..]
    }
}

fn tokens_of(
    aligned: &AlignedCorpus,
    id: &ParaphraseId,
    key: &VerseKey,
) -> Result<Vec<String>, PathError> {
    let corpus = aligned
        .corpus(id)
        .ok_or_else(|| PathError::UnknownMember(id.clone()))?;
    let text = corpus.get(key).ok_or_else(|| PathError::MissingVerse {
        id: id.clone(),
        key: key.clone(),
    })?;
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if let Some(t) = tokens.iter().find(|t| is_tag(t)) {
        return Err(PathError::TagInText {
            id: id.clone(),
            key: key.clone(),
            token: t.clone(),
        });
    }
    Ok(tokens)
}

/// Emits one pair per (path, key), in lexicographic (path, key) order.
pub fn assemble_dataset(
    aligned: &AlignedCorpus,
    split_keys: &[VerseKey],
    config: &ExperimentConfig,
) -> Result<Vec<TaggedPair>, PathError> {
    assemble_paths(aligned, split_keys, &config.paths())
}

pub fn assemble_paths(
    aligned: &AlignedCorpus,
    split_keys: &[VerseKey],
    paths: &[TranslationPath],
) -> Result<Vec<TaggedPair>, PathError> {
    let mut keys = split_keys.to_vec();
    keys.sort();
    keys.dedup();
    let mut paths = paths.to_vec();
    paths.sort();

    let mut out = Vec::with_capacity(paths.len() * keys.len());
    for path in &paths {
        let src_tag = path.src_tag().rendered;
        let tgt_tag = path.tgt_tag().rendered;
        for key in &keys {
            let mut source_tokens = vec![src_tag.clone(), tgt_tag.clone()];
            source_tokens.extend(tokens_of(aligned, &path.src, key)?);
            let target_tokens = tokens_of(aligned, &path.tgt, key)?;
            out.push(TaggedPair {
                path: path.clone(),
                key: key.clone(),
                source_tokens,
                target_tokens,
            });
        }
    }
    Ok(out)
}

/// Downsamples `pairs` to exactly `budget` items, spreading the selection
/// round-robin across paths so that every path keeps at least one pair when
/// `budget` is at least the number of paths. Selected pairs keep their input order.
pub fn equalize_budget(
    pairs: &[TaggedPair],
    budget: usize,
    seed: u64,
) -> Result<Vec<TaggedPair>, PathError> {
    if budget > pairs.len() {
        return Err(PathError::BudgetTooLarge {
            budget,
            available: pairs.len(),
        });
    }
    if budget == pairs.len() {
        return Ok(pairs.to_vec());
    }

    let mut by_path: BTreeMap<&TranslationPath, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_path.entry(&p.path).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<Vec<usize>> = by_path.into_values().collect();
    for q in &mut queues {
        q.shuffle(&mut rng);
    }

    let mut chosen = Vec::with_capacity(budget);
    let mut round = 0;
    while chosen.len() < budget {
        let mut order: Vec<usize> = (0..queues.len()).filter(|&q| round < queues[q].len()).collect();
        let room = budget - chosen.len();
        if order.len() > room {
            // Last partial round: which paths get one more is random.
            order.shuffle(&mut rng);
            order.truncate(room);
        }
        chosen.extend(order.into_iter().map(|q| queues[q][round]));
        round += 1;
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| pairs[i].clone()).collect())
}

/// Writes the dataset as parallel `.src` / `.tgt` line streams.
pub fn render_parallel(pairs: &[TaggedPair]) -> (String, String) {
    let mut src = String::new();
    let mut tgt = String::new();
    for p in pairs {
        src.push_str(&p.source_tokens.join(" "));
        src.push('\n');
        tgt.push_str(&p.target_tokens.join(" "));
        tgt.push('\n');
    }
    (src, tgt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{align_corpora, parse_corpus};

    fn id(s: &str) -> ParaphraseId {
        s.parse().unwrap()
    }

    fn ids(names: &[&str]) -> Vec<ParaphraseId> {
        names.iter().map(|n| id(n)).collect()
    }

    fn aligned(names: &[&str], n_keys: usize) -> AlignedCorpus {
        let corpora = names
            .iter()
            .map(|n| {
                let text: String = (0..n_keys)
                    .map(|k| format!("k{k:03}\t{n} word{k} end\n"))
                    .collect();
                parse_corpus(&text, id(n)).unwrap()
            })
            .collect();
        align_corpora(corpora).unwrap()
    }

    #[test]
    fn tags_follow_scheme() {
        assert_eq!(make_tag(&id("j1"), Side::Source).rendered, "__opt_src_j1");
        assert_eq!(make_tag(&id("e0"), Side::Target).rendered, "__opt_tgt_e0");
        assert_eq!(make_tag(&id("f0"), Side::Source).rendered, "__opt_src_f0");
    }

    #[test]
    fn path_counts() {
        assert_eq!(enumerate_paths(&ids(&["j0", "j1", "e0", "e1"]), PathPolicy::AllPairs).len(), 12);
        let many: Vec<ParaphraseId> = (0..12)
            .flat_map(|v| [ParaphraseId::new("f", v).unwrap(), ParaphraseId::new("e", v).unwrap()])
            .collect();
        assert_eq!(enumerate_paths(&many, PathPolicy::AllPairs).len(), 552);
        assert_eq!(enumerate_paths(&many, PathPolicy::CrossLingualOnly).len(), 288);
        assert!(enumerate_paths(&ids(&["f0"]), PathPolicy::AllPairs).is_empty());
        assert!(enumerate_paths(&[], PathPolicy::AllPairs).is_empty());
    }

    #[test]
    fn paths_are_sorted() {
        let paths = enumerate_paths(&ids(&["f1", "e0", "f0"]), PathPolicy::AllPairs);
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
        assert_eq!(paths[0].to_string(), "e0->f0");
    }

    #[test]
    fn assembles_tagged_pairs() {
        let a = aligned(&["f0", "e0"], 3);
        let cfg = ExperimentConfig {
            kind: ConfigKind::Single,
            members: ids(&["f0", "e0"]),
            eval_path: TranslationPath::new(id("f0"), id("e0")),
            budget: None,
            path_policy: PathPolicy::AllPairs,
            seed: 0,
        };
        cfg.validate().unwrap();
        let pairs = assemble_dataset(&a, &a.keys, &cfg).unwrap();
        assert_eq!(pairs.len(), 6);
        for p in &pairs {
            assert_eq!(p.source_tokens[0], p.path.src_tag().rendered);
            assert_eq!(p.source_tokens[1], p.path.tgt_tag().rendered);
            assert!(!p.target_tokens.iter().any(|t| is_tag(t)));
        }
        let f0e0 = pairs.iter().find(|p| p.path.src == id("f0")).unwrap();
        assert_eq!(f0e0.source_tokens.join(" "), "__opt_src_f0 __opt_tgt_e0 f0 word0 end");
        assert_eq!(f0e0.target_tokens.join(" "), "e0 word0 end");
    }

    #[test]
    fn single_counts_under_both_policies() {
        let a = aligned(&["f0", "e0"], 100);
        let members = ids(&["f0", "e0"]);
        let all = enumerate_paths(&members, PathPolicy::AllPairs);
        let cross = enumerate_paths(&members, PathPolicy::CrossLingualOnly);
        assert_eq!(assemble_paths(&a, &a.keys, &all).unwrap().len(), 200);
        // Both directions between f0 and e0 are already cross-lingual.
        assert_eq!(assemble_paths(&a, &a.keys, &cross).unwrap().len(), 200);
    }

    #[test]
    fn tag_in_text_is_rejected() {
        let f = parse_corpus("k0\thello __opt_src_x\n", id("f0")).unwrap();
        let e = parse_corpus("k0\tworld\n", id("e0")).unwrap();
        let a = align_corpora(vec![f, e]).unwrap();
        let path = TranslationPath::new(id("f0"), id("e0"));
        assert!(matches!(
            assemble_paths(&a, &a.keys, &[path]),
            Err(PathError::TagInText { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig {
            kind: ConfigKind::Single,
            members: ids(&["f0", "e0", "e1"]),
            eval_path: TranslationPath::new(id("f0"), id("e0")),
            budget: None,
            path_policy: PathPolicy::AllPairs,
            seed: 0,
        };
        assert!(cfg.validate().is_err());
        cfg.kind = ConfigKind::Vtgt;
        assert!(cfg.validate().is_ok());
        cfg.members = ids(&["f0", "e1"]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn grid_membership() {
        let src = ids(&["f0", "f1", "f2", "f3"]);
        let tgt = ids(&["e0", "e1", "e2", "e3"]);
        let m = |k, n| grid_members(k, n, &src, &tgt, &[]).unwrap();
        assert_eq!(m(ConfigKind::Single, 1), ids(&["f0", "e0"]));
        assert_eq!(m(ConfigKind::Vsrc, 1), ids(&["f0", "e0"]));
        assert_eq!(m(ConfigKind::Vsrc, 5), ids(&["f0", "f1", "f2", "f3", "e0"]));
        assert_eq!(m(ConfigKind::Vtgt, 5), ids(&["f0", "e0", "e1", "e2", "e3"]));
        assert_eq!(m(ConfigKind::Vmix, 5), ids(&["f0", "f1", "f2", "e0", "e1"]));
        assert_eq!(m(ConfigKind::Vmix, 8).len(), 8);
        assert!(grid_members(ConfigKind::Vsrc, 6, &src, &tgt, &[]).is_err());
        let extra = ids(&["de0", "es0"]);
        assert_eq!(
            grid_members(ConfigKind::Multilingual, 4, &src, &tgt, &extra).unwrap(),
            ids(&["f0", "e0", "de0", "es0"])
        );
    }

    fn many_pairs() -> Vec<TaggedPair> {
        let names = ["f0", "f1", "e0"];
        let a = aligned(&names, 100);
        let paths = enumerate_paths(&ids(&names), PathPolicy::AllPairs);
        assemble_paths(&a, &a.keys, &paths).unwrap()
    }

    #[test]
    fn full_budget_is_identity() {
        let pairs = many_pairs();
        assert_eq!(pairs.len(), 600);
        assert_eq!(equalize_budget(&pairs, 600, 1).unwrap(), pairs);
    }

    #[test]
    fn budget_of_path_count_keeps_one_per_path() {
        let pairs = many_pairs();
        let picked = equalize_budget(&pairs, 6, 9).unwrap();
        assert_eq!(picked.len(), 6);
        let mut paths: Vec<_> = picked.iter().map(|p| p.path.clone()).collect();
        paths.dedup();
        assert_eq!(paths.len(), 6);
    }

    #[test]
    fn budget_is_deterministic_and_balanced() {
        let pairs = many_pairs();
        let a = equalize_budget(&pairs, 100, 3).unwrap();
        assert_eq!(a, equalize_budget(&pairs, 100, 3).unwrap());
        assert_ne!(a, equalize_budget(&pairs, 100, 4).unwrap());
        let mut per_path: BTreeMap<TranslationPath, usize> = BTreeMap::new();
        for p in &a {
            *per_path.entry(p.path.clone()).or_default() += 1;
        }
        assert!(per_path.values().all(|&c| c == 16 || c == 17));
        assert!(matches!(
            equalize_budget(&pairs, 601, 0),
            Err(PathError::BudgetTooLarge { .. })
        ));
    }
}
