use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub bleu: f64,
    pub n_gram_precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// Clipped matches per order, corpus totals.
    pub matches: [u64; MAX_ORDER],
    /// Hypothesis n-gram counts per order, corpus totals.
    pub totals: [u64; MAX_ORDER],
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let gram: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU with one reference per hypothesis, in [0, 1].
pub fn corpus_bleu<S: AsRef<str>>(
    hypotheses: &[Vec<S>],
    references: &[Vec<S>],
) -> Result<BleuReport, MetricError> {
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            hyp: hypotheses.len(),
            reference: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }

    let mut matches = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    let mut hyp_len = 0;
    let mut ref_len = 0;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            for (gram, count) in &h {
                totals[n - 1] += count;
                matches[n - 1] += (*count).min(r.get(gram).copied().unwrap_or(0));
            }
        }
    }

    let mut n_gram_precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if totals[n] > 0 {
            n_gram_precisions[n] = matches[n] as f64 / totals[n] as f64;
        }
    }
    let brevity_penalty = if hyp_len < ref_len {
        // An empty output is treated as length one so the penalty stays positive.
        (1.0 - ref_len as f64 / hyp_len.max(1) as f64).exp()
    } else {
        1.0
    };
    let bleu = if n_gram_precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let mean_log = n_gram_precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        brevity_penalty * mean_log.exp()
    };
    Ok(BleuReport {
        bleu,
        n_gram_precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
        matches,
        totals,
    })
}
