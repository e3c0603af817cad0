//! Synthetic paraphrase corpora with known structure.
//!
//! Each language has `vocab_size` words partitioned into synonym classes of two
//! or three words; the first word of a class is canonical. Base verses are
//! Zipf-distributed class sequences. The target language realizes the same
//! class sequence with its own words, so translation is a class-wise mapping.
//! Paraphrase `v` of a side replaces each canonical word, independently with
//! probability `substitution_rate`, by another member of its class.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParaphraseCorpus, ParaphraseId, VerseKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Words per language.
    pub vocab_size: usize,
    pub sentences: usize,
    pub paraphrases_per_side: usize,
    pub substitution_rate: f64,
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub source_lang: String,
    pub target_lang: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab_size: 400,
            sentences: 800,
            paraphrases_per_side: 4,
            substitution_rate: 0.3,
            seed: 1,
            min_len: 4,
            max_len: 9,
            source_lang: "f".into(),
            target_lang: "e".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.vocab_size < 2 || self.sentences == 0 || self.paraphrases_per_side == 0 {
            return Err("vocab_size >= 2, sentences >= 1 and paraphrases_per_side >= 1 required".into());
        }
        if !(0.0..=1.0).contains(&self.substitution_rate) {
            return Err("substitution_rate must lie in [0, 1]".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err("need 1 <= min_len <= max_len".into());
        }
        if self.source_lang == self.target_lang {
            return Err("source and target languages must differ".into());
        }
        for lang in [&self.source_lang, &self.target_lang] {
            if ParaphraseId::new(lang, 0).is_err() {
                return Err(format!("`{lang}` is not a valid language code"));
            }
        }
        Ok(())
    }
}

const SRC_ONSETS: &[&str] = &["b", "d", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const SRC_NUCLEI: &[&str] = &["a", "e", "i", "o", "u"];
const TGT_ONSETS: &[&str] = &["c", "f", "h", "j", "qu", "v", "w", "x", "y", "z", "sh"];
const TGT_NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ay", "ee"];

/// `n` distinct pseudo-words built from the given syllable inventory.
fn make_words(n: usize, onsets: &[&str], nuclei: &[&str], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.gen_range(1..=3);
        let w: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}",
                    onsets.choose(rng).unwrap(),
                    nuclei.choose(rng).unwrap()
                )
            })
            .collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// Splits `n` words into classes of size 2 or 3 (a final singleton is possible).
fn class_sizes(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let s = if left <= 3 { left } else { rng.gen_range(2..=3) };
        sizes.push(s);
        left -= s;
    }
    sizes
}

fn group<'a>(words: &'a [String], sizes: &[usize]) -> Vec<&'a [String]> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &s in sizes {
        out.push(&words[at..at + s]);
        at += s;
    }
    out
}

fn realize(
    base: &[Vec<usize>],
    classes: &[&[String]],
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    base.iter()
        .map(|verse| {
            let words: Vec<&str> = verse
                .iter()
                .map(|&c| {
                    let class = classes[c];
                    if class.len() > 1 && rng.gen::<f64>() < rate {
                        class[rng.gen_range(1..class.len())].as_str()
                    } else {
                        class[0].as_str()
                    }
                })
                .collect();
            words.join(" ")
        })
        .collect()
}

fn verse_key(i: usize, total: usize) -> VerseKey {
    let width = total.to_string().len();
    VerseKey::new(format!("v{i:0width$}"))
}

/// Builds `2 * paraphrases_per_side` corpora over one shared key set, sources first.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<ParaphraseCorpus>, String> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let src_words = make_words(spec.vocab_size, SRC_ONSETS, SRC_NUCLEI, &mut rng);
    let tgt_words = make_words(spec.vocab_size, TGT_ONSETS, TGT_NUCLEI, &mut rng);
    let sizes = class_sizes(spec.vocab_size, &mut rng);
    let src_classes = group(&src_words, &sizes);
    let tgt_classes = group(&tgt_words, &sizes);

    let zipf: Vec<f64> = (0..sizes.len()).map(|r| 1.0 / (r + 1) as f64).collect();
    let dist = WeightedIndex::new(&zipf).expect("positive weights");
    let base: Vec<Vec<usize>> = (0..spec.sentences)
        .map(|_| {
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            (0..len).map(|_| dist.sample(&mut rng)).collect()
        })
        .collect();
    let keys: Vec<VerseKey> = (0..spec.sentences).map(|i| verse_key(i, spec.sentences)).collect();

    let mut corpora = Vec::with_capacity(2 * spec.paraphrases_per_side);
    for (side, (lang, classes)) in [
        (&spec.source_lang, &src_classes),
        (&spec.target_lang, &tgt_classes),
    ]
    .into_iter()
    .enumerate()
    {
        for v in 0..spec.paraphrases_per_side {
            let mut prng = ChaCha8Rng::seed_from_u64(spec.seed);
            prng.set_stream(1 + (side * spec.paraphrases_per_side + v) as u64);
            let lines = realize(&base, classes, spec.substitution_rate, &mut prng);
            corpora.push(ParaphraseCorpus {
                id: ParaphraseId::new(lang, v as u32).map_err(|e| e.to_string())?,
                verses: keys.iter().cloned().zip(lines).collect(),
            });
        }
    }
    Ok(corpora)
}

/// Writes each corpus to `<dir>/<id>.txt` and returns the paths in corpus order.
pub fn write_corpora(dir: &Path, corpora: &[ParaphraseCorpus]) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    corpora
        .iter()
        .map(|c| {
            let path = dir.join(format!("{}.txt", c.id));
            fs::write(&path, c.to_file_string())?;
            Ok(path)
        })
        .collect()
}
