use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;

pub const MIN_BOOTSTRAP: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub entropy_bits: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub num_bootstrap: usize,
    pub alpha: f64,
    pub seed: u64,
}

fn entropy_of_counts(counts: &HashMap<&str, u64>, total: u64) -> f64 {
    let mut values: Vec<u64> = counts.values().copied().collect();
    entropy_of_sorted(&mut values, total)
}

/// Sorts `values` first so the floating-point sum does not depend on the
/// order types were seen in.
fn entropy_of_sorted(values: &mut [u64], total: u64) -> f64 {
    values.sort_unstable();
    let total = total as f64;
    let h: f64 = values
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // -0.0 for a single type.
    h.max(0.0)
}

/// Shannon entropy (bits) of the unigram distribution over all tokens.
pub fn unigram_entropy<S: AsRef<str>>(token_lines: &[Vec<S>]) -> Result<f64, MetricError> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0;
    for line in token_lines {
        for t in line {
            *counts.entry(t.as_ref()).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricError::NoTokens);
    }
    Ok(entropy_of_counts(&counts, total))
}

/// Percentile of already-sorted values, linear interpolation between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap interval for [`unigram_entropy`], resampling whole lines.
///
/// Replicate `b` draws from its own stream seeded by `(seed, b)`, so the result
/// does not depend on evaluation order.
pub fn bootstrap_ci<S: AsRef<str>>(
    token_lines: &[Vec<S>],
    num_bootstrap: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64), MetricError> {
    if token_lines.len() < 2 {
        return Err(MetricError::TooFewLines(token_lines.len()));
    }
    if num_bootstrap < MIN_BOOTSTRAP {
        return Err(MetricError::TooFewReplicates(num_bootstrap));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricError::BadAlpha(alpha));
    }
    if token_lines.iter().all(|l| l.is_empty()) {
        return Err(MetricError::NoTokens);
    }

    // Tokens are interned once; each replicate then counts into a dense array.
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let lines: Vec<Vec<usize>> = token_lines
        .iter()
        .map(|l| {
            l.iter()
                .map(|t| {
                    let next = ids.len();
                    *ids.entry(t.as_ref()).or_insert(next)
                })
                .collect()
        })
        .collect();
    let n = lines.len();
    let mut replicates = Vec::with_capacity(num_bootstrap);
    let mut counts = vec![0u64; ids.len()];
    let mut nonzero: Vec<u64> = Vec::with_capacity(ids.len());
    for b in 0..num_bootstrap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        counts.iter_mut().for_each(|c| *c = 0);
        let mut total = 0;
        for _ in 0..n {
            let line = &lines[rng.gen_range(0..n)];
            for &t in line {
                counts[t] += 1;
            }
            total += line.len() as u64;
        }
        // A replicate made only of empty lines carries no information.
        replicates.push(if total == 0 {
            0.0
        } else {
            nonzero.clear();
            nonzero.extend(counts.iter().copied().filter(|&c| c > 0));
            entropy_of_sorted(&mut nonzero, total)
        });
    }
    replicates.sort_by(f64::total_cmp);
    Ok((
        percentile(&replicates, alpha / 2.0),
        percentile(&replicates, 1.0 - alpha / 2.0),
    ))
}

pub fn entropy_report<S: AsRef<str>>(
    token_lines: &[Vec<S>],
    num_bootstrap: usize,
    alpha: f64,
    seed: u64,
) -> Result<EntropyReport, MetricError> {
    let entropy_bits = unigram_entropy(token_lines)?;
    let (ci_low, ci_high) = bootstrap_ci(token_lines, num_bootstrap, alpha, seed)?;
    Ok(EntropyReport {
        entropy_bits,
        ci_low,
        ci_high,
        num_bootstrap,
        alpha,
        seed,
    })
}
