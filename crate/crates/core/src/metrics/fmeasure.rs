use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Training-frequency classes, as inclusive `(low, high)` bounds.
pub const BUCKETS: [(u64, u64); 9] = [
    (0, 0),
    (1, 1),
    (2, 2),
    (3, 3),
    (4, 4),
    (5, 9),
    (10, 99),
    (100, 999),
    (1000, u64::MAX),
];

pub fn bucket_label(index: usize) -> String {
    match BUCKETS[index] {
        (lo, hi) if lo == hi => lo.to_string(),
        (lo, u64::MAX) => format!(">={lo}"),
        (lo, hi) => format!("{lo}-{hi}"),
    }
}

pub fn bucket_of(train_count: u64) -> usize {
    BUCKETS
        .iter()
        .position(|&(lo, hi)| (lo..=hi).contains(&train_count))
        .expect("buckets cover all counts")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub label: String,
    pub matched: u64,
    pub hyp_tokens: u64,
    pub ref_tokens: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BucketScore {
    pub fn is_populated(&self) -> bool {
        self.hyp_tokens > 0 || self.ref_tokens > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketF1Report {
    pub buckets: Vec<BucketScore>,
}

impl BucketF1Report {
    pub fn f1(&self, bucket: usize) -> f64 {
        self.buckets[bucket].f1
    }

    pub fn total_matched(&self) -> u64 {
        self.buckets.iter().map(|b| b.matched).sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Word precision/recall/F1 grouped by each word's training-corpus frequency.
pub fn bucket_fmeasure<S: AsRef<str>>(
    hypotheses: &[Vec<S>],
    references: &[Vec<S>],
    training_frequencies: &HashMap<String, u64>,
) -> Result<BucketF1Report, MetricError> {
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            hyp: hypotheses.len(),
            reference: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let bucket = |w: &str| bucket_of(training_frequencies.get(w).copied().unwrap_or(0));

    let mut matched = [0u64; BUCKETS.len()];
    let mut hyp_tokens = [0u64; BUCKETS.len()];
    let mut ref_tokens = [0u64; BUCKETS.len()];
    for (hyp, reference) in hypotheses.iter().zip(references) {
        let mut h: HashMap<&str, u64> = HashMap::new();
        for w in hyp {
            *h.entry(w.as_ref()).or_insert(0) += 1;
        }
        let mut r: HashMap<&str, u64> = HashMap::new();
        for w in reference {
            *r.entry(w.as_ref()).or_insert(0) += 1;
        }
        for (w, &c) in &h {
            let b = bucket(w);
            hyp_tokens[b] += c;
            matched[b] += c.min(r.get(w).copied().unwrap_or(0));
        }
        for (w, &c) in &r {
            ref_tokens[bucket(w)] += c;
        }
    }

    let buckets = (0..BUCKETS.len())
        .map(|b| {
            let precision = ratio(matched[b], hyp_tokens[b]);
            let recall = ratio(matched[b], ref_tokens[b]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            BucketScore {
                label: bucket_label(b),
                matched: matched[b],
                hyp_tokens: hyp_tokens[b],
                ref_tokens: ref_tokens[b],
                precision,
                recall,
                f1,
            }
        })
        .collect();
    Ok(BucketF1Report { buckets })
}
