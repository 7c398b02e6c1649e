//! A small byte-level autoregressive language model with exact gradients.
//!
//! A (prompt, response) pair is scored as the sequence `[BOS] ++ prompt ++
//! response`; the response token at index `i` is predicted from position
//! `1 + |prompt| + i − 1`, so it conditions on the prompt and on `y_<i` only.

mod adamw;
mod checkpoint;
mod params;
mod scalar;
mod transformer;
mod vocab;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting,
    read_manifest, save_checkpoint, CheckpointManifest, TensorEntry, CHECKPOINT_MAGIC,
};
pub use params::{Gradients, ModelConfig, ModelParams, TensorSpec};
pub use scalar::{Precision, Scalar};
pub use transformer::{backward, forward, Tape};
pub use vocab::{Token, Vocabulary, BOS, EOS, PAD, VOCAB_SIZE};

use crate::error::{Error, Result};

/// Next-token distribution at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    pub probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn from_log_probs<F: Scalar>(log_probs: &[F]) -> Self {
        TokenDistribution {
            probs: log_probs.iter().map(|v| v.as_f64().exp()).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Highest-probability token; ties go to the lowest id.
    pub fn argmax(&self) -> Token {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as Token
    }
}

/// Anything that yields causal next-token distributions over the byte vocabulary.
pub trait CausalLm: Sync {
    fn context_len(&self) -> usize;

    /// One distribution per input position; position `t` conditions on `tokens[..=t]`.
    fn distributions(&self, tokens: &[Token]) -> Result<Vec<TokenDistribution>>;

    /// `log p(tokens[t+1] | tokens[..=t])` for each `t` in `from..tokens.len()-1`.
    fn target_log_probs(&self, tokens: &[Token], from: usize) -> Result<Vec<f64>> {
        let dists = self.distributions(tokens)?;
        Ok((from..tokens.len().saturating_sub(1))
            .map(|t| dists[t].probs[tokens[t + 1] as usize].ln())
            .collect())
    }
}

impl<F: Scalar> CausalLm for ModelParams<F> {
    fn context_len(&self) -> usize {
        self.config().context_len
    }

    fn distributions(&self, tokens: &[Token]) -> Result<Vec<TokenDistribution>> {
        let tape = forward(self, tokens)?;
        Ok((0..tape.len())
            .map(|t| TokenDistribution::from_log_probs(tape.log_probs_at(t)))
            .collect())
    }

    fn target_log_probs(&self, tokens: &[Token], from: usize) -> Result<Vec<f64>> {
        let tape = forward(self, tokens)?;
        Ok((from..tokens.len().saturating_sub(1))
            .map(|t| tape.log_probs_at(t)[tokens[t + 1] as usize].as_f64())
            .collect())
    }
}

/// `[BOS] ++ prompt ++ response` and the position predicting `response[0]`.
pub fn join_pair(prompt: &[Token], response: &[Token]) -> (Vec<Token>, usize) {
    let mut seq = Vec::with_capacity(1 + prompt.len() + response.len());
    seq.push(BOS);
    seq.extend_from_slice(prompt);
    seq.extend_from_slice(response);
    (seq, prompt.len())
}

/// Per-token `log h(x, y_<i)[y_i]` over the response.
pub fn response_log_probs<M: CausalLm + ?Sized>(
    model: &M,
    prompt: &[Token],
    response: &[Token],
) -> Result<Vec<f64>> {
    if response.is_empty() {
        return Err(Error::contract("response scoring", "empty response"));
    }
    let (seq, first) = join_pair(prompt, response);
    model.target_log_probs(&seq, first)
}

/// `Σ_i −log h(x, y_<i)[y_i]`; only response positions contribute.
pub fn sequence_cross_entropy<M: CausalLm + ?Sized>(
    model: &M,
    prompt: &[Token],
    response: &[Token],
) -> Result<f64> {
    Ok(-response_log_probs(model, prompt, response)?
        .iter()
        .sum::<f64>())
}

/// `log π(y | x) = Σ_i log h(x, y_<i)[y_i]`.
pub fn sequence_log_prob<M: CausalLm + ?Sized>(
    model: &M,
    prompt: &[Token],
    response: &[Token],
) -> Result<f64> {
    Ok(response_log_probs(model, prompt, response)?.iter().sum())
}

/// Arithmetic mean of the correct-token probabilities (not of their logs).
pub fn avg_correct_prob<M: CausalLm + ?Sized>(
    model: &M,
    prompt: &[Token],
    response: &[Token],
) -> Result<f64> {
    let lps = response_log_probs(model, prompt, response)?;
    Ok(lps.iter().map(|lp| lp.exp()).sum::<f64>() / lps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Emits a fixed distribution regardless of input.
    struct Constant(Vec<f64>);

    impl CausalLm for Constant {
        fn context_len(&self) -> usize {
            64
        }
        fn distributions(&self, tokens: &[Token]) -> Result<Vec<TokenDistribution>> {
            Ok(vec![
                TokenDistribution {
                    probs: self.0.clone()
                };
                tokens.len()
            ])
        }
    }

    /// Gives `p_correct` to a scripted next token at each position.
    struct Scripted {
        script: Vec<(Token, f64)>,
    }

    impl CausalLm for Scripted {
        fn context_len(&self) -> usize {
            64
        }
        fn distributions(&self, tokens: &[Token]) -> Result<Vec<TokenDistribution>> {
            Ok((0..tokens.len())
                .map(|t| {
                    let (tok, p) = self.script.get(t).copied().unwrap_or((0, 1.0));
                    let rest = (1.0 - p) / (VOCAB_SIZE - 1) as f64;
                    let mut probs = vec![rest; VOCAB_SIZE];
                    probs[tok as usize] = p;
                    TokenDistribution { probs }
                })
                .collect())
        }
    }

    fn uniform() -> Constant {
        Constant(vec![1.0 / VOCAB_SIZE as f64; VOCAB_SIZE])
    }

    #[test]
    fn uniform_model_scores() {
        let m = uniform();
        let v = VOCAB_SIZE as f64;
        let ce = sequence_cross_entropy(&m, &[1, 2], &[3, 4, 5]).unwrap();
        assert_abs_diff_eq!(ce, 3.0 * v.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            avg_correct_prob(&m, &[1], &[2]).unwrap(),
            1.0 / 259.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            sequence_log_prob(&m, &[], &[7, 8]).unwrap(),
            -2.0 * v.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn scripted_model_scores() {
        // prompt [10]: positions 0 (BOS) and 1 (prompt) precede the response
        let m = Scripted {
            script: vec![(0, 0.5), (20, 0.2), (21, 0.6)],
        };
        let avg = avg_correct_prob(&m, &[10], &[20, 21]).unwrap();
        assert_abs_diff_eq!(avg, 0.4, epsilon = 1e-12);
        let single = sequence_cross_entropy(&m, &[10], &[20]).unwrap();
        assert_abs_diff_eq!(single, -(0.2f64).ln(), epsilon = 1e-12);
        let lp = sequence_log_prob(&m, &[10], &[20]).unwrap();
        assert_abs_diff_eq!(
            lp.exp(),
            avg_correct_prob(&m, &[10], &[20]).unwrap(),
            epsilon = 1e-12
        );

        let perfect = Scripted {
            script: vec![(0, 1.0), (20, 1.0), (21, 1.0)],
        };
        assert_abs_diff_eq!(avg_correct_prob(&perfect, &[10], &[20, 21]).unwrap(), 1.0);
    }

    #[test]
    fn empty_response_is_rejected() {
        let m = uniform();
        assert!(sequence_cross_entropy(&m, &[1], &[]).is_err());
        assert!(avg_correct_prob(&m, &[1], &[]).is_err());
        assert!(sequence_log_prob(&m, &[1], &[]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let d = TokenDistribution {
            probs: vec![0.25, 0.5, 0.5, 0.0],
        };
        assert_eq!(d.argmax(), 1);
    }

    fn tiny() -> ModelParams<f64> {
        ModelParams::init(&ModelConfig::tiny(5)).unwrap()
    }

    #[test]
    fn real_model_doubling_response_increases_loss() {
        let m = tiny();
        let y = [72, 105, 33];
        let once = sequence_cross_entropy(&m, &[65], &y).unwrap();
        let twice = sequence_cross_entropy(&m, &[65], &[72, 105, 33, 72, 105, 33]).unwrap();
        assert!(twice > once);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn distributions_normalise(tokens in proptest::collection::vec(0u32..259, 1..24)) {
            let m = tiny();
            for d in m.distributions(&tokens).unwrap() {
                prop_assert!((d.total() - 1.0).abs() < 1e-6);
                prop_assert!(d.probs.iter().all(|&p| p >= 0.0));
            }
        }

        #[test]
        fn later_tokens_do_not_affect_earlier_positions(
            tokens in proptest::collection::vec(0u32..259, 2..24),
            j in 0usize..23,
            replacement in 0u32..259,
        ) {
            let m = tiny();
            let j = j % tokens.len();
            let mut perturbed = tokens.clone();
            perturbed[j] = replacement;
            let a = m.distributions(&tokens).unwrap();
            let b = m.distributions(&perturbed).unwrap();
            for t in 0..j {
                prop_assert_eq!(&a[t], &b[t]);
            }
        }

        #[test]
        fn appending_a_token_never_raises_log_prob(
            resp in proptest::collection::vec(0u32..256, 1..10),
            extra in 0u32..256,
        ) {
            let m = tiny();
            let base = sequence_log_prob(&m, &[66], &resp).unwrap();
            let mut longer = resp.clone();
            longer.push(extra);
            prop_assert!(sequence_log_prob(&m, &[66], &longer).unwrap() <= base);
        }
    }
}
