use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::bpe::MergeTable;
use crate::pathgen::{is_tag, TaggedPair};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("size cap {cap} leaves no room beyond {reserved} specials and tags")]
    CapTooSmall { cap: usize, reserved: usize },
    #[error("vocabulary file line {0}: expected `<token>\\t<id>`")]
    BadLine(usize),
    #[error("vocabulary file: ids must be dense and start at 0 (line {0})")]
    NonDenseIds(usize),
    #[error("vocabulary file: duplicate token `{0}`")]
    DuplicateToken(String),
    #[error("vocabulary file: special tokens missing or misplaced")]
    BadSpecials,
}

/// Dense token ids: specials first, then path tags, then subwords by frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, u32>,
    num_tags: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(VocabError::BadSpecials);
        }
        let mut id_of = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if id_of.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::DuplicateToken(t.clone()));
            }
        }
        let num_tags = tokens[SPECIALS.len()..]
            .iter()
            .take_while(|t| is_tag(t))
            .count();
        Ok(Vocabulary {
            tokens,
            id_of,
            num_tags,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn id(&self, token: &str) -> u32 {
        self.id_of.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id_of.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Maps ids back to tokens, skipping specials and tags.
    pub fn decode_content(&self, ids: &[u32]) -> Vec<String> {
        let first_content = (SPECIALS.len() + self.num_tags) as u32;
        ids.iter()
            .filter_map(|&id| match id {
                UNK => Some(SPECIALS[UNK as usize].to_string()),
                id if id >= first_content => self.token(id).map(str::to_string),
                _ => None,
            })
            .collect()
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{t}\t{i}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.split_once('\t').ok_or(VocabError::BadLine(i + 1))?;
            let id: usize = id.parse().map_err(|_| VocabError::BadLine(i + 1))?;
            if id != tokens.len() {
                return Err(VocabError::NonDenseIds(i + 1));
            }
            tokens.push(tok.to_string());
        }
        Vocabulary::from_tokens(tokens)
    }

    /// SHA-256 of the vocabulary file rendering, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_file_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Builds a vocabulary from already-encoded token streams.
///
/// `tags` go right after the specials in sorted order; remaining slots are
/// filled by descending frequency, ties broken lexicographically.
pub fn build_vocab_from_streams<'a, I>(
    tags: &BTreeSet<String>,
    streams: I,
    size_cap: usize,
) -> Result<Vocabulary, VocabError>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let reserved = SPECIALS.len() + tags.len();
    if size_cap <= reserved {
        return Err(VocabError::CapTooSmall {
            cap: size_cap,
            reserved,
        });
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for stream in streams {
        for t in stream {
            if !is_tag(t) && !SPECIALS.contains(&t.as_str()) {
                *freq.entry(t.as_str()).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(tags.iter().cloned());
    tokens.extend(
        ranked
            .into_iter()
            .take(size_cap - reserved)
            .map(|(t, _)| t.to_string()),
    );
    Vocabulary::from_tokens(tokens)
}

/// Vocabulary over the BPE-encoded source and target sides of `dataset`.
pub fn build_vocab(
    dataset: &[TaggedPair],
    merges: &MergeTable,
    size_cap: usize,
) -> Result<Vocabulary, VocabError> {
    let mut enc = merges.encoder();
    let mut tags = BTreeSet::new();
    let mut streams = Vec::with_capacity(dataset.len() * 2);
    for pair in dataset {
        tags.extend(pair.source_tokens.iter().filter(|t| is_tag(t)).cloned());
        streams.push(enc.encode(&pair.source_tokens));
        streams.push(enc.encode(&pair.target_tokens));
    }
    build_vocab_from_streams(&tags, streams.iter().map(Vec::as_slice), size_cap)
}
