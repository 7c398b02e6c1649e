//! Metrics that query a language model: likelihoods, truth ratio,
//! generation-based memorization, and membership scores.

use crate::data::PerturbedAnswerSet;
use crate::error::{Error, Result};
use crate::model::{
    join_pair, response_log_probs, sequence_log_prob, CausalLm, Token, Vocabulary, BOS, EOS,
};
use crate::parallel::Exec;

use super::stats::{ks_two_sample, KsResult};
use super::text::{bleu, rouge_l_f1, rouge_l_recall};

/// A borrowed (prompt, response) pair.
pub type Pair<'a> = (&'a [Token], &'a [Token]);

/// `exp(Σ CE / Σ |y|)` over response tokens of all pairs.
pub fn perplexity<M: CausalLm + ?Sized>(model: &M, pairs: &[Pair<'_>], exec: Exec) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::contract("perplexity", "empty corpus"));
    }
    let per = exec.try_map(pairs, |&(x, y)| response_log_probs(model, x, y))?;
    let tokens: usize = per.iter().map(Vec::len).sum();
    let nll: f64 = -per.iter().flatten().sum::<f64>();
    Ok((nll / tokens as f64).exp())
}

/// `P(a | q)^{1/|a|}`.
pub fn normalized_cond_prob<M: CausalLm + ?Sized>(
    model: &M,
    q: &[Token],
    a: &[Token],
) -> Result<f64> {
    Ok(log_normalized_cond_prob(model, q, a)?.exp())
}

fn log_normalized_cond_prob<M: CausalLm + ?Sized>(
    model: &M,
    q: &[Token],
    a: &[Token],
) -> Result<f64> {
    Ok(sequence_log_prob(model, q, a)? / a.len() as f64)
}

/// `ncp(a₀) / Σ_i ncp(ã_i)`.
pub fn answer_ratio<M: CausalLm + ?Sized>(
    model: &M,
    q: &[Token],
    correct: &[Token],
    perturbed: &[Vec<Token>],
) -> Result<f64> {
    if perturbed.is_empty() {
        return Err(Error::contract("answer_ratio", "no perturbed answers"));
    }
    let num = normalized_cond_prob(model, q, correct)?;
    let mut den = 0.0;
    for a in perturbed {
        den += normalized_cond_prob(model, q, a)?;
    }
    if den == 0.0 {
        return Err(Error::domain(
            "answer_ratio",
            "perturbed answers have zero probability",
        ));
    }
    Ok(num / den)
}

/// `(Π_i ncp(ã_i))^{1/|A|} / ncp(â)`, evaluated in log space.
pub fn truth_ratio<M: CausalLm + ?Sized>(
    model: &M,
    q: &[Token],
    denominator: &[Token],
    perturbed: &[Vec<Token>],
) -> Result<f64> {
    if perturbed.is_empty() {
        return Err(Error::contract("truth_ratio", "no perturbed answers"));
    }
    let mut log_num = 0.0;
    for a in perturbed {
        log_num += log_normalized_cond_prob(model, q, a)?;
    }
    log_num /= perturbed.len() as f64;
    let log_den = log_normalized_cond_prob(model, q, denominator)?;
    if log_den == f64::NEG_INFINITY {
        return Err(Error::domain(
            "truth_ratio",
            "denominator answer has zero probability",
        ));
    }
    Ok((log_num - log_den).exp())
}

/// Which answer sits in the truth-ratio denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthDenominator {
    Paraphrase,
    /// The original answer, used for the real-author and world-fact subsets.
    Original,
}

pub fn truth_ratios<M: CausalLm + ?Sized>(
    model: &M,
    sets: &[PerturbedAnswerSet],
    denom: TruthDenominator,
    exec: Exec,
) -> Result<Vec<f64>> {
    exec.try_map(sets, |s| {
        let d = match denom {
            TruthDenominator::Paraphrase => &s.paraphrase,
            TruthDenominator::Original => &s.correct,
        };
        truth_ratio(model, &s.question, d, &s.perturbed)
    })
}

/// KS p-value between the two models' truth-ratio distributions on the
/// forget records.
pub fn forget_quality<A: CausalLm + ?Sized, B: CausalLm + ?Sized>(
    unlearned: &A,
    retained: &B,
    records: &[PerturbedAnswerSet],
    exec: Exec,
) -> Result<KsResult> {
    let u = truth_ratios(unlearned, records, TruthDenominator::Paraphrase, exec)?;
    let r = truth_ratios(retained, records, TruthDenominator::Paraphrase, exec)?;
    ks_two_sample(&u, &r)
}

/// Argmax decoding from `[BOS] ++ prompt`. Stops after EOS (not returned),
/// after `max_new_tokens`, or when the context is full.
pub fn greedy_generate<M: CausalLm + ?Sized>(
    model: &M,
    prompt: &[Token],
    max_new_tokens: usize,
) -> Result<Vec<Token>> {
    let mut seq = Vec::with_capacity(1 + prompt.len() + max_new_tokens);
    seq.push(BOS);
    seq.extend_from_slice(prompt);
    let mut out = Vec::new();
    while out.len() < max_new_tokens && seq.len() < model.context_len() {
        let dists = model.distributions(&seq)?;
        let next = dists.last().expect("non-empty sequence").argmax();
        if next == EOS {
            break;
        }
        seq.push(next);
        out.push(next);
    }
    Ok(out)
}

/// Drop PAD/BOS/EOS before text comparison.
pub fn strip_specials(tokens: &[Token]) -> Vec<Token> {
    tokens
        .iter()
        .copied()
        .filter(|&t| !Vocabulary.is_special(t))
        .collect()
}

/// Greedy answers to each prompt, with budget `|reference|`.
pub fn generate_answers<M: CausalLm + ?Sized>(
    model: &M,
    pairs: &[Pair<'_>],
    exec: Exec,
) -> Result<Vec<Vec<Token>>> {
    exec.try_map(pairs, |&(x, y)| greedy_generate(model, x, y.len()))
}

/// Text scores of generated answers against their references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationScores {
    pub rouge_l_recall: f64,
    pub rouge_l_f1: f64,
    pub bleu: f64,
}

pub fn score_generations(pairs: &[Pair<'_>], generated: &[Vec<Token>]) -> Result<GenerationScores> {
    if pairs.is_empty() || pairs.len() != generated.len() {
        return Err(Error::contract(
            "score_generations",
            "need one generation per non-empty pair list",
        ));
    }
    let mut s = GenerationScores {
        rouge_l_recall: 0.0,
        rouge_l_f1: 0.0,
        bleu: 0.0,
    };
    for (&(_, y), g) in pairs.iter().zip(generated) {
        let r = strip_specials(y);
        let c = strip_specials(g);
        s.rouge_l_recall += rouge_l_recall(&r, &c)?;
        s.rouge_l_f1 += rouge_l_f1(&r, &c)?;
        s.bleu += bleu(&r, &c)?;
    }
    let n = pairs.len() as f64;
    s.rouge_l_recall /= n;
    s.rouge_l_f1 /= n;
    s.bleu /= n;
    Ok(s)
}

/// Mean ROUGE-L F1 between each sequence's continuation after `prefix_len`
/// tokens and the greedy continuation of that prefix.
pub fn verbmem<M: CausalLm + ?Sized>(
    model: &M,
    sequences: &[Vec<Token>],
    prefix_len: usize,
    exec: Exec,
) -> Result<f64> {
    if prefix_len == 0 {
        return Err(Error::contract("verbmem", "prefix_len must be positive"));
    }
    if let Some(s) = sequences.iter().find(|s| s.len() <= prefix_len) {
        return Err(Error::contract(
            "verbmem",
            format!("sequence of {} tokens has no continuation", s.len()),
        ));
    }
    let pairs: Vec<Pair<'_>> = sequences.iter().map(|s| s.split_at(prefix_len)).collect();
    let generated = generate_answers(model, &pairs, exec)?;
    Ok(score_generations(&pairs, &generated)?.rouge_l_f1)
}

/// Mean ROUGE-L F1 of greedy answers to QA pairs.
pub fn knowmem<M: CausalLm + ?Sized>(model: &M, pairs: &[Pair<'_>], exec: Exec) -> Result<f64> {
    let generated = generate_answers(model, pairs, exec)?;
    Ok(score_generations(pairs, &generated)?.rouge_l_f1)
}

pub const DEFAULT_MIN_K: f64 = 0.2;

/// Mean of the lowest `⌈k·n⌉` token log-probabilities.
pub fn min_k_from_log_probs(log_probs: &[f64], k: f64) -> Result<f64> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::domain(
            "min_k_score",
            format!("k = {k} must be in (0, 1]"),
        ));
    }
    if log_probs.is_empty() {
        return Err(Error::contract("min_k_score", "empty sequence"));
    }
    let mut lp = log_probs.to_vec();
    lp.sort_by(f64::total_cmp);
    // guard against k·n landing a hair above an integer
    let m = ((k * lp.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(lp[..m].iter().sum::<f64>() / m as f64)
}

/// Min-K% Prob of a (prompt, response) pair: all predicted tokens after BOS count.
pub fn min_k_score<M: CausalLm + ?Sized>(
    model: &M,
    prompt: &[Token],
    response: &[Token],
    k: f64,
) -> Result<f64> {
    let (seq, _) = join_pair(prompt, response);
    let lps = model.target_log_probs(&seq, 0)?;
    min_k_from_log_probs(&lps, k)
}

pub fn min_k_scores<M: CausalLm + ?Sized>(
    model: &M,
    pairs: &[Pair<'_>],
    k: f64,
    exec: Exec,
) -> Result<Vec<f64>> {
    exec.try_map(pairs, |&(x, y)| min_k_score(model, x, y, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TokenDistribution, VOCAB_SIZE};
    use approx::assert_abs_diff_eq;

    struct Uniform;

    impl CausalLm for Uniform {
        fn context_len(&self) -> usize {
            64
        }
        fn distributions(&self, tokens: &[Token]) -> Result<Vec<TokenDistribution>> {
            Ok(vec![
                TokenDistribution {
                    probs: vec![1.0 / VOCAB_SIZE as f64; VOCAB_SIZE]
                };
                tokens.len()
            ])
        }
    }

    /// Next token is always `(last + 1) mod 256` with probability `p`.
    struct Counter {
        p: f64,
    }

    impl CausalLm for Counter {
        fn context_len(&self) -> usize {
            16
        }
        fn distributions(&self, tokens: &[Token]) -> Result<Vec<TokenDistribution>> {
            Ok(tokens
                .iter()
                .map(|&t| {
                    let next = if t == BOS { 0 } else { (t + 1) % 256 } as usize;
                    let rest = (1.0 - self.p) / (VOCAB_SIZE - 1) as f64;
                    let mut probs = vec![rest; VOCAB_SIZE];
                    probs[next] = self.p;
                    TokenDistribution { probs }
                })
                .collect())
        }
    }

    #[test]
    fn perplexity_examples() {
        let y = [1u32, 2, 3];
        let pairs: Vec<Pair> = vec![(&[0], &y)];
        assert_abs_diff_eq!(
            perplexity(&Uniform, &pairs, Exec::Sequential).unwrap(),
            259.0,
            epsilon = 1e-9
        );
        let perfect = Counter { p: 1.0 };
        assert_abs_diff_eq!(perplexity(&perfect, &pairs, Exec::Sequential).unwrap(), 1.0);
        let single: Vec<Pair> = vec![(&[4], &[5])];
        assert_abs_diff_eq!(
            perplexity(&Counter { p: 0.25 }, &single, Exec::Sequential).unwrap(),
            4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn probability_examples() {
        let m = Counter { p: 0.3 };
        assert_abs_diff_eq!(
            normalized_cond_prob(&m, &[1], &[2]).unwrap(),
            0.3,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            normalized_cond_prob(&m, &[1], &[2, 3, 4]).unwrap(),
            0.3,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            normalized_cond_prob(&Uniform, &[1], &[9, 9]).unwrap(),
            1.0 / 259.0,
            epsilon = 1e-15
        );
        let a0 = vec![5u32, 6];
        assert_abs_diff_eq!(
            answer_ratio(&m, &[4], &a0, std::slice::from_ref(&a0)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let pert: Vec<Vec<Token>> = (0..4).map(|i| vec![i, i]).collect();
        assert_abs_diff_eq!(
            answer_ratio(&Uniform, &[1], &[7, 7], &pert).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn truth_ratio_examples() {
        let a = vec![vec![10u32, 11]];
        assert_abs_diff_eq!(
            truth_ratio(&Counter { p: 0.4 }, &[9], &a[0], &a).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let pert: Vec<Vec<Token>> = vec![vec![1, 2], vec![3, 4]];
        assert_abs_diff_eq!(
            truth_ratio(&Uniform, &[0], &[5, 6], &pert).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // numerator {0.1, 0.4}, denominator 0.2: sqrt(0.04) / 0.2 = 1
        let num = (0.1f64.ln() + 0.4f64.ln()) / 2.0;
        assert_abs_diff_eq!((num - 0.2f64.ln()).exp(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn greedy_decoding_and_budget() {
        let m = Counter { p: 0.9 };
        assert_eq!(greedy_generate(&m, &[3], 4).unwrap(), vec![4, 5, 6, 7]);
        // context of 16 caps output at 16 - 2 tokens
        assert_eq!(greedy_generate(&m, &[3], 100).unwrap().len(), 14);
        assert_eq!(greedy_generate(&m, &[3], 0).unwrap(), Vec::<Token>::new());
    }

    #[test]
    fn memorization_metrics() {
        let m = Counter { p: 0.9 };
        let seqs = vec![vec![1, 2, 3, 4, 5], vec![7, 8, 9, 10]];
        assert_eq!(verbmem(&m, &seqs, 2, Exec::Sequential).unwrap(), 1.0);
        assert!(verbmem(&m, &seqs, 4, Exec::Sequential).is_err());
        let y = [EOS];
        let pairs: Vec<Pair> = vec![(&[1], &[2, 3, EOS]), (&[1], &y)];
        assert!(knowmem(&m, &pairs, Exec::Sequential).is_err());
        let pairs: Vec<Pair> = vec![(&[1], &[2, 3, EOS]), (&[5], &[6, 0, EOS])];
        // budget 3: [2,3,4] vs [2,3] gives F1 0.8; [6,7,8] vs [6,0] gives 0.4
        assert_abs_diff_eq!(
            knowmem(&m, &pairs, Exec::Sequential).unwrap(),
            0.6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn min_k_examples() {
        let lp = [0.1f64.ln(), 0.9f64.ln()];
        assert_abs_diff_eq!(min_k_from_log_probs(&lp, 0.5).unwrap(), 0.1f64.ln());
        assert_abs_diff_eq!(
            min_k_from_log_probs(&lp, 1.0).unwrap(),
            (lp[0] + lp[1]) / 2.0
        );
        let m = Counter { p: 0.3 };
        for k in [0.2, 0.5, 1.0] {
            assert_abs_diff_eq!(
                min_k_score(&m, &[0], &[1, 2], k).unwrap(),
                0.3f64.ln(),
                epsilon = 1e-12
            );
        }
        assert!(min_k_from_log_probs(&lp, 0.0).is_err());
    }
}
