//! Independent reference implementations used as test oracles. They favor the
//! most literal reading of each definition over speed.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Clipped n-gram matches by explicit position marking: each reference
/// occurrence can be claimed by at most one hypothesis occurrence.
fn marked_matches(hyp: &[String], reference: &[String], n: usize) -> (u64, u64) {
    if hyp.len() < n {
        return (0, 0);
    }
    let ref_grams: Vec<&[String]> = if reference.len() >= n {
        (0..=reference.len() - n).map(|i| &reference[i..i + n]).collect()
    } else {
        Vec::new()
    };
    let mut used = vec![false; ref_grams.len()];
    let mut matched = 0;
    let total = (hyp.len() - n + 1) as u64;
    for i in 0..=hyp.len() - n {
        let gram = &hyp[i..i + n];
        if let Some(j) = (0..ref_grams.len()).find(|&j| !used[j] && ref_grams[j] == gram) {
            used[j] = true;
            matched += 1;
        }
    }
    (matched, total)
}

/// Corpus BLEU in [0, 1]: geometric mean of clipped 1..4-gram precisions times
/// the brevity penalty.
pub fn bleu_oracle(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut m = [0u64; 4];
    let mut t = [0u64; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let (a, b) = marked_matches(h, rf, n);
            m[n - 1] += a;
            t[n - 1] += b;
        }
    }
    if (0..4).any(|i| m[i] == 0) {
        return 0.0;
    }
    let log_mean: f64 = (0..4).map(|i| (m[i] as f64 / t[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c < r { (1.0 - r as f64 / c.max(1) as f64).exp() } else { 1.0 };
    bp * log_mean.exp()
}

/// Per-bucket `(matched, hyp tokens, ref tokens)` by position marking.
pub fn bucket_counts_oracle(
    hyps: &[Vec<String>],
    refs: &[Vec<String>],
    freqs: &HashMap<String, u64>,
    bucket_of: impl Fn(u64) -> usize,
    buckets: usize,
) -> Vec<(u64, u64, u64)> {
    let mut out = vec![(0, 0, 0); buckets];
    let b = |w: &str| bucket_of(freqs.get(w).copied().unwrap_or(0));
    for (h, r) in hyps.iter().zip(refs) {
        let mut used = vec![false; r.len()];
        for w in h {
            out[b(w)].1 += 1;
            if let Some(j) = (0..r.len()).find(|&j| !used[j] && &r[j] == w) {
                used[j] = true;
                out[b(w)].0 += 1;
            }
        }
        for w in r {
            out[b(w)].2 += 1;
        }
    }
    out
}

/// Greedy BPE by full recount over every word occurrence at every step.
/// Ties go to the lexicographically smallest `(left, right)` pair.
pub fn bpe_oracle(lines: &[Vec<String>], num_merges: usize) -> Vec<(String, String)> {
    let mut words: Vec<Vec<String>> = lines
        .iter()
        .flatten()
        .map(|w| {
            let mut s: Vec<String> = w.chars().map(String::from).collect();
            s.last_mut().unwrap().push_str("</w>");
            s
        })
        .collect();
    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut counts: HashMap<(String, String), u64> = HashMap::new();
        for w in &words {
            for p in w.windows(2) {
                *counts.entry((p[0].clone(), p[1].clone())).or_insert(0) += 1;
            }
        }
        let Some(best) = counts
            .iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|(p, _)| p.clone())
        else {
            break;
        };
        for w in &mut words {
            let mut out = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == best.0 && w[i + 1] == best.1 {
                    out.push(format!("{}{}", best.0, best.1));
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        merges.push(best);
    }
    merges
}

/// Random lines over a small alphabet so pairs repeat and ties happen.
pub fn random_lines(rng: &mut ChaCha8Rng, lines: usize, alphabet: &[char]) -> Vec<Vec<String>> {
    (0..lines)
        .map(|_| {
            let n = rng.gen_range(1..7);
            (0..n)
                .map(|_| {
                    let len = rng.gen_range(1..7);
                    (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
                })
                .collect()
        })
        .collect()
}
