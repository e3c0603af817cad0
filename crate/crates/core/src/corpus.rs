//! Verse-keyed paraphrase corpora: loading, alignment and train/validation/test splitting.
//!
//! A corpus file holds one record per line, `<verse_key>\t<sentence>`. Blank
//! lines are skipped and trailing whitespace on the sentence is trimmed; nothing
//! else about the text is touched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest aligned corpus that [`split_corpus`] accepts.
pub const MIN_SPLIT_KEYS: usize = 10;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus {0} is empty")]
    Empty(String),
    #[error("line {line}: malformed record ({reason})")]
    Malformed { line: usize, reason: &'static str },
    #[error("duplicate verse key `{0}`")]
    DuplicateKey(String),
    #[error("invalid paraphrase id `{0}`: expected <lang><version>, e.g. f0 or e11")]
    BadId(String),
    #[error("alignment needs at least two corpora, got {0}")]
    TooFewCorpora(usize),
    #[error("paraphrase id {0} appears more than once")]
    DuplicateId(ParaphraseId),
    #[error("corpora share no verse keys")]
    EmptyIntersection,
    #[error("split needs at least {MIN_SPLIT_KEYS} keys, got {0}")]
    TooFewKeys(usize),
}

/// Identifier of one aligned unit, shared by every paraphrase of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerseKey(String);

impl VerseKey {
    /// Panics on an empty key; use [`VerseKey::parse`] for untrusted input.
    pub fn new(key: impl Into<String>) -> Self {
        let key = key.into();
        assert!(!key.is_empty(), "verse key must be non-empty");
        VerseKey(key)
    }

    pub fn parse(key: &str) -> Option<Self> {
        if key.is_empty() || key.chars().any(char::is_whitespace) {
            None
        } else {
            Some(VerseKey(key.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VerseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One translation version, e.g. `f0` (French, version 0) or `e11`.
///
/// Ordering is by language code, then by numeric version, so `e2 < e10`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParaphraseId {
    pub lang: String,
    pub version: u32,
}

impl ParaphraseId {
    pub fn new(lang: &str, version: u32) -> Result<Self, CorpusError> {
        if lang.is_empty() || !lang.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(CorpusError::BadId(format!("{lang}{version}")));
        }
        Ok(ParaphraseId {
            lang: lang.to_string(),
            version,
        })
    }
}

impl FromStr for ParaphraseId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| CorpusError::BadId(s.to_string()))?;
        let (lang, digits) = s.split_at(split);
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(CorpusError::BadId(s.to_string()));
        }
        // "f01" would not render back to itself.
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(CorpusError::BadId(s.to_string()));
        }
        let version = digits
            .parse()
            .map_err(|_| CorpusError::BadId(s.to_string()))?;
        ParaphraseId::new(lang, version).map_err(|_| CorpusError::BadId(s.to_string()))
    }
}

impl fmt::Display for ParaphraseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.lang, self.version)
    }
}

impl Serialize for ParaphraseId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParaphraseId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParaphraseCorpus {
    pub id: ParaphraseId,
    pub verses: BTreeMap<VerseKey, String>,
}

impl ParaphraseCorpus {
    pub fn len(&self) -> usize {
        self.verses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verses.is_empty()
    }

    pub fn get(&self, key: &VerseKey) -> Option<&str> {
        self.verses.get(key).map(String::as_str)
    }

    /// Renders the corpus in the on-disk record format, keys in order.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (key, text) in &self.verses {
            out.push_str(key.as_str());
            out.push('\t');
            out.push_str(text);
            out.push('\n');
        }
        out
    }
}

pub fn parse_corpus(text: &str, id: ParaphraseId) -> Result<ParaphraseCorpus, CorpusError> {
    let mut verses = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (key, sentence) = raw.split_once('\t').ok_or(CorpusError::Malformed {
            line: line_no,
            reason: "missing tab separator",
        })?;
        let key = VerseKey::parse(key).ok_or(CorpusError::Malformed {
            line: line_no,
            reason: "empty or whitespace-bearing verse key",
        })?;
        let sentence = sentence.trim_end();
        if sentence.trim().is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                reason: "empty sentence",
            });
        }
        if verses.insert(key.clone(), sentence.to_string()).is_some() {
            return Err(CorpusError::DuplicateKey(key.0));
        }
    }
    if verses.is_empty() {
        return Err(CorpusError::Empty(id.to_string()));
    }
    Ok(ParaphraseCorpus { id, verses })
}

pub fn load_corpus(path: &Path, id: ParaphraseId) -> Result<ParaphraseCorpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, id)
}

/// A verse dropped during alignment because some sibling corpus lacks it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DroppedVerse {
    pub key: VerseKey,
    pub id: ParaphraseId,
}

/// Corpora restricted to the verse keys they all share.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCorpus {
    pub keys: Vec<VerseKey>,
    pub corpora: Vec<ParaphraseCorpus>,
    pub dropped: Vec<DroppedVerse>,
}

impl AlignedCorpus {
    pub fn corpus(&self, id: &ParaphraseId) -> Option<&ParaphraseCorpus> {
        self.corpora.iter().find(|c| &c.id == id)
    }

    pub fn ids(&self) -> Vec<ParaphraseId> {
        self.corpora.iter().map(|c| c.id.clone()).collect()
    }

    /// Drop report lines, `<verse_key>\t<paraphrase_id>`.
    pub fn drop_report(&self) -> String {
        self.dropped
            .iter()
            .map(|d| format!("{}\t{}\n", d.key, d.id))
            .collect()
    }
}

pub fn align_corpora(corpora: Vec<ParaphraseCorpus>) -> Result<AlignedCorpus, CorpusError> {
    if corpora.len() < 2 {
        return Err(CorpusError::TooFewCorpora(corpora.len()));
    }
    let mut seen = BTreeSet::new();
    for c in &corpora {
        if !seen.insert(c.id.clone()) {
            return Err(CorpusError::DuplicateId(c.id.clone()));
        }
    }

    let mut shared: BTreeSet<&VerseKey> = corpora[0].verses.keys().collect();
    for c in &corpora[1..] {
        shared.retain(|k| c.verses.contains_key(*k));
    }
    if shared.is_empty() {
        return Err(CorpusError::EmptyIntersection);
    }
    let keys: Vec<VerseKey> = shared.into_iter().cloned().collect();
    let keep: BTreeSet<&VerseKey> = keys.iter().collect();

    let mut dropped = Vec::new();
    let mut aligned = Vec::with_capacity(corpora.len());
    for c in &corpora {
        let mut verses = BTreeMap::new();
        for (k, text) in &c.verses {
            if keep.contains(k) {
                verses.insert(k.clone(), text.clone());
            } else {
                dropped.push(DroppedVerse {
                    key: k.clone(),
                    id: c.id.clone(),
                });
            }
        }
        aligned.push(ParaphraseCorpus {
            id: c.id.clone(),
            verses,
        });
    }
    dropped.sort();
    Ok(AlignedCorpus {
        keys,
        corpora: aligned,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<VerseKey>,
    pub validation: Vec<VerseKey>,
    pub test: Vec<VerseKey>,
    pub seed: u64,
}

impl DataSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Train/validation/test sizes for `k` keys at 0.75/0.15/0.10.
///
/// Train and validation are floored, test takes the remainder.
pub fn split_sizes(k: usize) -> (usize, usize, usize) {
    // Integer arithmetic keeps e.g. 0.15 * 100 from flooring to 14.
    let train = k * 75 / 100;
    let validation = k * 15 / 100;
    (train, validation, k - train - validation)
}

pub fn split_corpus(aligned: &AlignedCorpus, seed: u64) -> Result<DataSplit, CorpusError> {
    split_keys(&aligned.keys, seed)
}

/// Shuffles `keys` (taken in lexicographic order) with `seed` and partitions them.
/// Each part is returned sorted.
pub fn split_keys(keys: &[VerseKey], seed: u64) -> Result<DataSplit, CorpusError> {
    let k = keys.len();
    if k < MIN_SPLIT_KEYS {
        return Err(CorpusError::TooFewKeys(k));
    }
    let mut order: Vec<VerseKey> = keys.to_vec();
    order.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let (n_train, n_val, _) = split_sizes(k);
    let mut test = order.split_off(n_train + n_val);
    let mut validation = order.split_off(n_train);
    let mut train = order;
    train.sort();
    validation.sort();
    test.sort();
    Ok(DataSplit {
        train,
        validation,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> ParaphraseId {
        s.parse().unwrap()
    }

    fn corpus(name: &str, keys: &[&str]) -> ParaphraseCorpus {
        let text: String = keys.iter().map(|k| format!("{k}\tline {k}\n")).collect();
        parse_corpus(&text, id(name)).unwrap()
    }

    #[test]
    fn parses_two_records() {
        let c = parse_corpus("k1\ta b\nk2\tc\n", id("f0")).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(&VerseKey::new("k1")), Some("a b"));
    }

    #[test]
    fn duplicate_key_is_named() {
        let err = parse_corpus("k1\ta\nk1\tb\n", id("f0")).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateKey(ref k) if k == "k1"));
        assert!(err.to_string().contains("k1"));
    }

    #[test]
    fn trailing_whitespace_is_trimmed() {
        let c = parse_corpus("k1\ta b  \r\n", id("e0")).unwrap();
        assert_eq!(c.get(&VerseKey::new("k1")), Some("a b"));
    }

    #[test]
    fn leading_whitespace_is_preserved() {
        let c = parse_corpus("k1\t  a\n", id("e0")).unwrap();
        assert_eq!(c.get(&VerseKey::new("k1")), Some("  a"));
    }

    #[test]
    fn blank_lines_are_skipped() {
        let c = parse_corpus("\nk1\ta\n   \n\nk2\tb\n", id("e0")).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_corpus("k1\ta\nno tab here\n", id("e0")).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }));
        let err = parse_corpus("k1\t   \n", id("e0")).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(
            parse_corpus("", id("e0")),
            Err(CorpusError::Empty(_))
        ));
        assert!(matches!(
            parse_corpus("\n\n", id("e0")),
            Err(CorpusError::Empty(_))
        ));
    }

    #[test]
    fn paraphrase_id_round_trips() {
        for s in ["f0", "e11", "zh3", "fra12"] {
            assert_eq!(id(s).to_string(), s);
        }
        for bad in ["", "f", "0", "f0x", "f-1", "f01", "é1"] {
            assert!(bad.parse::<ParaphraseId>().is_err(), "{bad}");
        }
        assert!(id("e2") < id("e10"));
        assert!(id("e10") < id("f0"));
    }

    #[test]
    fn align_intersects_key_sets() {
        let a = corpus("f0", &["k1", "k2", "k3", "k4"]);
        let b = corpus("e0", &["k1", "k2", "k3"]);
        let aligned = align_corpora(vec![a, b]).unwrap();
        let keys: Vec<&str> = aligned.keys.iter().map(VerseKey::as_str).collect();
        assert_eq!(keys, ["k1", "k2", "k3"]);
        assert_eq!(aligned.drop_report(), "k4\tf0\n");
        assert!(aligned.corpora.iter().all(|c| c.len() == 3));
    }

    #[test]
    fn identical_corpora_drop_nothing() {
        let a = corpus("f0", &["k1", "k2"]);
        let b = corpus("e0", &["k1", "k2"]);
        let aligned = align_corpora(vec![a, b]).unwrap();
        assert_eq!(aligned.keys.len(), 2);
        assert!(aligned.dropped.is_empty());
    }

    #[test]
    fn disjoint_corpora_are_rejected() {
        let err = align_corpora(vec![corpus("f0", &["k1"]), corpus("e0", &["k2"])]).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyIntersection));
    }

    #[test]
    fn alignment_preconditions() {
        assert!(matches!(
            align_corpora(vec![corpus("f0", &["k1"])]),
            Err(CorpusError::TooFewCorpora(1))
        ));
        assert!(matches!(
            align_corpora(vec![corpus("f0", &["k1"]), corpus("f0", &["k1"])]),
            Err(CorpusError::DuplicateId(_))
        ));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        assert_eq!(split_sizes(1000), (750, 150, 100));
        assert_eq!(split_sizes(10), (7, 1, 2));
        assert_eq!(split_sizes(100), (75, 15, 10));
        assert_eq!(split_sizes(23000), (17250, 3450, 2300));
        assert_eq!(split_sizes(11), (8, 1, 2));
    }

    #[test]
    fn split_is_deterministic_and_rejects_small_inputs() {
        let keys: Vec<VerseKey> = (0..50).map(|i| VerseKey::new(format!("v{i:03}"))).collect();
        let a = split_keys(&keys, 7).unwrap();
        let b = split_keys(&keys, 7).unwrap();
        assert_eq!(a, b);
        let c = split_keys(&keys, 8).unwrap();
        assert_ne!(a.train, c.train);
        assert!(matches!(
            split_keys(&keys[..9], 0),
            Err(CorpusError::TooFewKeys(9))
        ));
    }

    #[test]
    fn split_ignores_input_order() {
        let keys: Vec<VerseKey> = (0..30).map(|i| VerseKey::new(format!("v{i:02}"))).collect();
        let mut reversed = keys.clone();
        reversed.reverse();
        assert_eq!(split_keys(&keys, 3).unwrap(), split_keys(&reversed, 3).unwrap());
    }
}
