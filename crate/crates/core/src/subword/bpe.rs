use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::pathgen::is_tag;

/// Marks the last symbol of a word while learning and applying merges.
pub const END_OF_WORD: &str = "</w>";
/// Suffix on every emitted subword that does not end a word.
pub const CONTINUATION: &str = "@@";

const VERSION_HEADER: &str = "#version: 0.2";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BpeError {
    #[error("token sequence ends with a dangling continuation `{0}`")]
    DanglingContinuation(String),
    #[error("merge file: missing `#version` header")]
    MissingHeader,
    #[error("merge file line {0}: expected two symbols")]
    BadMergeLine(usize),
    #[error("merge file line {0}: duplicate merge")]
    DuplicateMerge(usize),
    #[error("merge ({0}, {1}) touches a reserved token")]
    ReservedInMerge(String, String),
}

/// Ordered BPE merges plus the tokens that are never segmented.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    reserved: BTreeSet<String>,
}

impl MergeTable {
    pub fn new(
        merges: Vec<(String, String)>,
        reserved: BTreeSet<String>,
    ) -> Result<Self, BpeError> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (a, b)) in merges.iter().enumerate() {
            let joined = format!("{a}{b}");
            if [a, b, &joined].iter().any(|s| reserved.contains(s.as_str())) {
                return Err(BpeError::ReservedInMerge(a.clone(), b.clone()));
            }
            if ranks.insert((a.clone(), b.clone()), rank).is_some() {
                return Err(BpeError::DuplicateMerge(rank + 2));
            }
        }
        Ok(MergeTable {
            merges,
            ranks,
            reserved,
        })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    pub fn reserved(&self) -> &BTreeSet<String> {
        &self.reserved
    }

    /// Tags are always reserved, whether or not they were listed.
    pub fn is_reserved(&self, token: &str) -> bool {
        is_tag(token) || self.reserved.contains(token)
    }

    /// Table restricted to its first `n` merges.
    pub fn truncated(&self, n: usize) -> MergeTable {
        let merges = self.merges[..n.min(self.merges.len())].to_vec();
        MergeTable::new(merges, self.reserved.clone()).expect("prefix of a valid table")
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from(VERSION_HEADER);
        out.push('\n');
        for (a, b) in &self.merges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn parse(text: &str, reserved: BTreeSet<String>) -> Result<Self, BpeError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.starts_with("#version") => {}
            _ => return Err(BpeError::MissingHeader),
        }
        let mut merges = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let (a, b) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => (a, b),
                _ => return Err(BpeError::BadMergeLine(i + 2)),
            };
            if !seen.insert((a.to_string(), b.to_string())) {
                return Err(BpeError::DuplicateMerge(i + 2));
            }
            merges.push((a.to_string(), b.to_string()));
        }
        MergeTable::new(merges, reserved)
    }

    fn rank(&self, a: &str, b: &str) -> Option<usize> {
        // Tuple keys of owned strings cannot be probed with &str pairs.
        self.ranks.get(&(a.to_string(), b.to_string())).copied()
    }

    /// Segments a single (non-reserved) word; the last symbol carries [`END_OF_WORD`].
    fn segment(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.rank(&w[0], &w[1]).map(|r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == a && &symbols[i + 1] == b {
                    merged.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    pub fn encoder(&self) -> BpeEncoder<'_> {
        BpeEncoder {
            table: self,
            cache: HashMap::new(),
        }
    }
}

/// Characters of `word`, with the end-of-word marker fused onto the last one.
pub(crate) fn initial_symbols(word: &str) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = symbols.last_mut() {
        last.push_str(END_OF_WORD);
    }
    symbols
}

fn render_word(symbols: Vec<String>, out: &mut Vec<String>) {
    let n = symbols.len();
    for (i, mut s) in symbols.into_iter().enumerate() {
        if i + 1 == n {
            let cut = s.len() - END_OF_WORD.len();
            s.truncate(cut);
        } else {
            s.push_str(CONTINUATION);
        }
        out.push(s);
    }
}

/// Memoizing encoder over one merge table.
pub struct BpeEncoder<'a> {
    table: &'a MergeTable,
    cache: HashMap<String, Vec<String>>,
}

impl BpeEncoder<'_> {
    pub fn encode(&mut self, sentence: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(sentence.len() * 2);
        for word in sentence {
            if self.table.is_reserved(word) {
                out.push(word.clone());
                continue;
            }
            if let Some(pieces) = self.cache.get(word) {
                out.extend(pieces.iter().cloned());
                continue;
            }
            let mut pieces = Vec::new();
            render_word(self.table.segment(word), &mut pieces);
            out.extend(pieces.iter().cloned());
            self.cache.insert(word.clone(), pieces);
        }
        out
    }
}

pub fn bpe_encode(sentence: &[String], merges: &MergeTable) -> Vec<String> {
    merges.encoder().encode(sentence)
}

/// Joins continuation pieces back into words. A word that itself ends in
/// `@@` is indistinguishable from a split one and does not round-trip.
pub fn bpe_decode(tokens: &[String]) -> Result<Vec<String>, BpeError> {
    let mut words = Vec::new();
    let mut pending = String::new();
    for tok in tokens {
        match tok.strip_suffix(CONTINUATION) {
            Some(stem) if !is_tag(tok) => pending.push_str(stem),
            _ => {
                pending.push_str(tok);
                words.push(std::mem::take(&mut pending));
            }
        }
    }
    if !pending.is_empty() || tokens.last().is_some_and(|t| t.ends_with(CONTINUATION) && !is_tag(t)) {
        return Err(BpeError::DanglingContinuation(
            tokens.last().cloned().unwrap_or_default(),
        ));
    }
    Ok(words)
}

/// Like [`bpe_decode`], but closes a dangling continuation instead of failing.
/// Meant for model output, which is not guaranteed to end on a word boundary.
pub fn bpe_decode_lossy(tokens: &[String]) -> Vec<String> {
    let mut tokens = tokens.to_vec();
    if let Some(last) = tokens.last_mut() {
        if !is_tag(last) {
            if let Some(stem) = last.strip_suffix(CONTINUATION) {
                *last = stem.to_string();
            }
        }
    }
    tokens.retain(|t| !t.is_empty());
    bpe_decode(&tokens).expect("trailing continuation removed")
}

type SymbolId = u32;

struct Interner {
    names: Vec<String>,
    ids: HashMap<String, SymbolId>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> SymbolId {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as SymbolId;
        self.names.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }
}

struct WordEntry {
    symbols: Vec<SymbolId>,
    freq: i64,
}

fn add_pairs(counts: &mut HashMap<(SymbolId, SymbolId), i64>, word: &WordEntry, sign: i64) {
    for w in word.symbols.windows(2) {
        let e = counts.entry((w[0], w[1])).or_insert(0);
        *e += sign * word.freq;
        if *e == 0 {
            counts.remove(&(w[0], w[1]));
        }
    }
}

/// Learns up to `num_merges` merges from whitespace-tokenized lines.
///
/// Each step merges the most frequent adjacent pair; ties go to the
/// lexicographically smallest pair. Reserved tokens and tags are not counted.
pub fn learn_bpe<S: AsRef<str>>(
    corpus_lines: &[Vec<S>],
    num_merges: usize,
    reserved: &BTreeSet<String>,
) -> MergeTable {
    let mut word_freq: HashMap<&str, i64> = HashMap::new();
    for line in corpus_lines {
        for tok in line {
            let tok = tok.as_ref();
            if tok.is_empty() || is_tag(tok) || reserved.contains(tok) {
                continue;
            }
            *word_freq.entry(tok).or_insert(0) += 1;
        }
    }
    let mut types: Vec<(&str, i64)> = word_freq.into_iter().collect();
    types.sort_unstable();

    let mut interner = Interner {
        names: Vec::new(),
        ids: HashMap::new(),
    };
    let mut words: Vec<WordEntry> = types
        .iter()
        .map(|(w, f)| WordEntry {
            symbols: initial_symbols(w).iter().map(|s| interner.intern(s)).collect(),
            freq: *f,
        })
        .collect();

    let mut counts: HashMap<(SymbolId, SymbolId), i64> = HashMap::new();
    for w in &words {
        add_pairs(&mut counts, w, 1);
    }

    let mut merges = Vec::with_capacity(num_merges);
    while merges.len() < num_merges {
        let best = counts.iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                let ka = (&interner.names[pa.0 as usize], &interner.names[pa.1 as usize]);
                let kb = (&interner.names[pb.0 as usize], &interner.names[pb.1 as usize]);
                kb.cmp(&ka)
            })
        });
        let Some((&(a, b), _)) = best else { break };
        let joined = format!(
            "{}{}",
            interner.names[a as usize], interner.names[b as usize]
        );
        let ab = interner.intern(&joined);
        for w in &mut words {
            if !w.symbols.windows(2).any(|p| p[0] == a && p[1] == b) {
                continue;
            }
            add_pairs(&mut counts, w, -1);
            let mut merged = Vec::with_capacity(w.symbols.len());
            let mut i = 0;
            while i < w.symbols.len() {
                if i + 1 < w.symbols.len() && w.symbols[i] == a && w.symbols[i + 1] == b {
                    merged.push(ab);
                    i += 2;
                } else {
                    merged.push(w.symbols[i]);
                    i += 1;
                }
            }
            w.symbols = merged;
            add_pairs(&mut counts, w, 1);
        }
        merges.push((
            interner.names[a as usize].clone(),
            interner.names[b as usize].clone(),
        ));
    }
    MergeTable::new(merges, reserved.clone()).expect("learned merges are unique and avoid reserved tokens")
}
