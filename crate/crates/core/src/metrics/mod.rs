//! Translation quality and lexical diversity measures over whitespace tokens.

mod bleu;
mod entropy;
mod fmeasure;

use thiserror::Error;

pub use bleu::{corpus_bleu, BleuReport, MAX_ORDER};
pub use entropy::{bootstrap_ci, entropy_report, unigram_entropy, EntropyReport, MIN_BOOTSTRAP};
pub use fmeasure::{bucket_fmeasure, bucket_label, bucket_of, BucketF1Report, BucketScore, BUCKETS};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("{hyp} hypotheses but {reference} references")]
    LengthMismatch { hyp: usize, reference: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus contains no tokens")]
    NoTokens,
    #[error("bootstrap needs at least 2 lines, got {0}")]
    TooFewLines(usize),
    #[error("bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn bucket_matches_sum_to_bleu_unigram_matches() {
        let hyp: Vec<Vec<&str>> = vec![vec!["a", "b", "b", "c"], vec!["d", "a"], vec![]];
        let reference: Vec<Vec<&str>> = vec![vec!["b", "a", "x"], vec!["d", "d", "a"], vec!["q"]];
        let freqs: HashMap<String, u64> = [("a", 1), ("b", 20), ("d", 4)]
            .iter()
            .map(|(w, c)| (w.to_string(), *c))
            .collect();
        let bleu = corpus_bleu(&hyp, &reference).unwrap();
        let f = bucket_fmeasure(&hyp, &reference, &freqs).unwrap();
        assert_eq!(f.total_matched(), bleu.matches[0]);
        assert_eq!(bleu.matches[0], 4);
    }
}
