//! Token-overlap metrics: ROUGE-L and BLEU.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn require_reference<T>(reference: &[T], op: &'static str) -> Result<()> {
    if reference.is_empty() {
        Err(Error::contract(op, "empty reference"))
    } else {
        Ok(())
    }
}

/// `LCS(reference, candidate) / |reference|`.
pub fn rouge_l_recall<T: PartialEq>(reference: &[T], candidate: &[T]) -> Result<f64> {
    require_reference(reference, "rouge_l_recall")?;
    Ok(lcs_len(reference, candidate) as f64 / reference.len() as f64)
}

/// Harmonic mean of LCS precision and recall; 0 when either is 0.
pub fn rouge_l_f1<T: PartialEq>(reference: &[T], candidate: &[T]) -> Result<f64> {
    require_reference(reference, "rouge_l_f1")?;
    let lcs = lcs_len(reference, candidate);
    if lcs == 0 {
        return Ok(0.0);
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate n-gram total.
pub fn modified_precision_counts<T: Eq + Hash>(
    reference: &[T],
    candidate: &[T],
    n: usize,
) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

pub const BLEU_ORDER: usize = 4;

/// Sentence BLEU-4 with uniform weights and a brevity penalty. Unigram
/// precision is unsmoothed; orders 2..4 use add-one smoothing
/// `(m + 1) / (t + 1)`.
pub fn bleu<T: Eq + Hash>(reference: &[T], candidate: &[T]) -> Result<f64> {
    require_reference(reference, "bleu")?;
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_ORDER {
        let (m, t) = modified_precision_counts(reference, candidate, n);
        let p = if n == 1 {
            m as f64 / t as f64
        } else {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    let (r, c) = (reference.len() as f64, candidate.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok(bp * (log_sum / BLEU_ORDER as f64).exp())
}
