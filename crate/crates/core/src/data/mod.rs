//! Corpora, splits, and evaluation record sets.

mod jsonl;
pub mod synthetic;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use jsonl::{load_jsonl, write_jsonl};

use crate::error::{Error, Result};
use crate::losses::{ForgetExample, RetainExample};
use crate::model::{Token, Vocabulary, EOS};

/// `{"prompt", "response", "template"?}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    pub prompt: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

impl QaRecord {
    pub fn new(prompt: impl Into<String>, response: impl Into<String>) -> Self {
        QaRecord {
            prompt: prompt.into(),
            response: response.into(),
            template: None,
        }
    }
}

/// A raw-text continuation pair. Unlike QA responses, continuations are not
/// terminated with EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionRecord {
    pub prefix: String,
    pub continuation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

/// `{"question", "answer", "paraphrase", "perturbed": [...]}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub question: String,
    pub answer: String,
    pub paraphrase: String,
    pub perturbed: Vec<String>,
}

/// Tokenized truth-ratio item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbedAnswerSet {
    pub question: Vec<Token>,
    pub correct: Vec<Token>,
    pub paraphrase: Vec<Token>,
    pub perturbed: Vec<Vec<Token>>,
}

impl PerturbedAnswerSet {
    pub fn from_record(r: &TruthRecord) -> Result<Self> {
        if r.perturbed.is_empty() {
            return Err(Error::Data(format!(
                "{:?}: no perturbed answers",
                r.question
            )));
        }
        if r.answer.is_empty()
            || r.paraphrase.is_empty()
            || r.perturbed.iter().any(String::is_empty)
        {
            return Err(Error::Data(format!("{:?}: empty answer", r.question)));
        }
        Ok(PerturbedAnswerSet {
            question: Vocabulary.encode(&r.question),
            correct: encode_response(&r.answer),
            paraphrase: encode_response(&r.paraphrase),
            perturbed: r.perturbed.iter().map(|s| encode_response(s)).collect(),
        })
    }
}

/// Forget, retain, and holdout splits plus the refusal pool.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnlearnCorpus {
    pub forget: Vec<ForgetExample>,
    pub retain: Vec<RetainExample>,
    pub holdout: Vec<RetainExample>,
    pub idk_pool: Vec<Vec<Token>>,
}

impl UnlearnCorpus {
    /// Forget and retain prompts must not overlap; holdout prompts must not
    /// appear in either.
    pub fn check_disjoint(&self) -> Result<()> {
        let forget: HashSet<&[Token]> = self.forget.iter().map(|e| e.x_f.as_slice()).collect();
        let retain: HashSet<&[Token]> = self.retain.iter().map(|e| e.x_r.as_slice()).collect();
        let show = |p: &[Token]| Vocabulary.decode_lossy(p);
        if let Some(p) = forget.intersection(&retain).next() {
            return Err(Error::Data(format!(
                "prompt {:?} appears in both forget and retain splits",
                show(p)
            )));
        }
        for h in &self.holdout {
            let p = h.x_r.as_slice();
            if forget.contains(p) || retain.contains(p) {
                return Err(Error::Data(format!(
                    "holdout prompt {:?} also appears in a training split",
                    show(p)
                )));
            }
        }
        Ok(())
    }
}

/// Response text as tokens with a trailing EOS.
pub fn encode_response(text: &str) -> Vec<Token> {
    let mut t = Vocabulary.encode(text);
    t.push(EOS);
    t
}

/// Split a token stream into consecutive chunks of at most `max_tokens`.
pub fn chunk_text(tokens: &[Token], max_tokens: usize) -> Result<Vec<Vec<Token>>> {
    if max_tokens == 0 {
        return Err(Error::contract("chunk_text", "max_tokens must be positive"));
    }
    Ok(tokens.chunks(max_tokens).map(<[Token]>::to_vec).collect())
}

/// Like [`chunk_text`] on the UTF-8 bytes of `text`, but never cuts inside a
/// character. A chunk may fall short of `max_bytes` by up to three bytes.
pub fn chunk_str(text: &str, max_bytes: usize) -> Result<Vec<&str>> {
    if max_bytes < 4 {
        return Err(Error::contract("chunk_str", "max_bytes must be at least 4"));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < text.len() {
        let mut end = (start + max_bytes).min(text.len());
        while !text.is_char_boundary(end) {
            end -= 1;
        }
        out.push(&text[start..end]);
        start = end;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionPairs {
    pub examples: Vec<ForgetExample>,
    /// Chunks too short to leave a non-empty completion.
    pub skipped: usize,
}

/// `x_f` = the first `prefix_len` tokens of each chunk, `y_f` = the rest.
pub fn make_completion_pairs(chunks: &[Vec<Token>], prefix_len: usize) -> Result<CompletionPairs> {
    if prefix_len == 0 {
        return Err(Error::contract(
            "make_completion_pairs",
            "prefix_len must be positive",
        ));
    }
    let mut examples = Vec::new();
    let mut skipped = 0;
    for chunk in chunks {
        if chunk.len() <= prefix_len {
            skipped += 1;
            continue;
        }
        examples.push(ForgetExample::new(
            chunk[..prefix_len].to_vec(),
            chunk[prefix_len..].to_vec(),
        ));
    }
    Ok(CompletionPairs { examples, skipped })
}

fn pick_from_pool(
    pool: &[Vec<Token>],
    seed: u64,
    stream: u64,
    n: usize,
) -> Result<Vec<Vec<Token>>> {
    if pool.is_empty() {
        return Err(Error::contract(
            "template assignment",
            "empty template pool",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok((0..n)
        .map(|_| pool[rng.random_range(0..pool.len())].clone())
        .collect())
}

/// Give every forget example a template answer `y_e` drawn from `pool`.
pub fn attach_templates(
    forget: &[ForgetExample],
    pool: &[Vec<Token>],
    seed: u64,
) -> Result<Vec<ForgetExample>> {
    let picks = pick_from_pool(pool, seed, 1, forget.len())?;
    Ok(forget
        .iter()
        .zip(picks)
        .map(|(e, y)| ForgetExample {
            y_e: Some(y),
            ..e.clone()
        })
        .collect())
}

/// Give every forget example a refusal `y_idk` drawn from `pool` (PO).
pub fn attach_refusals(
    forget: &[ForgetExample],
    pool: &[Vec<Token>],
    seed: u64,
) -> Result<Vec<ForgetExample>> {
    let picks = pick_from_pool(pool, seed, 2, forget.len())?;
    Ok(forget
        .iter()
        .zip(picks)
        .map(|(e, y)| ForgetExample {
            y_idk: Some(y),
            ..e.clone()
        })
        .collect())
}

/// Built-in refusal phrases.
pub const DEFAULT_IDK_PHRASES: [&str; 20] = [
    "I don't know.",
    "I'm not sure.",
    "I have no idea.",
    "I can't say.",
    "That is unknown to me.",
    "I don't have that information.",
    "I'm unable to answer that.",
    "No idea, sorry.",
    "I really couldn't tell you.",
    "That's beyond what I know.",
    "I'm not aware of that.",
    "I have no information on that.",
    "I cannot answer that question.",
    "Sorry, I don't know.",
    "I'm not certain.",
    "I don't recall.",
    "That is not something I know.",
    "I have no knowledge of that.",
    "I can't help with that one.",
    "Unknown to me, sorry.",
];

pub fn default_idk_pool() -> Vec<Vec<Token>> {
    DEFAULT_IDK_PHRASES
        .iter()
        .map(|s| encode_response(s))
        .collect()
}

/// One phrase per non-blank line.
pub fn load_idk_pool(path: impl AsRef<Path>) -> Result<Vec<Vec<Token>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pool: Vec<Vec<Token>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(encode_response)
        .collect();
    if pool.is_empty() {
        return Err(Error::Data(format!(
            "{}: refusal pool is empty",
            path.display()
        )));
    }
    Ok(pool)
}

pub const FORGET_QA_FILE: &str = "forget_qa.jsonl";
pub const FORGET_TEXT_FILE: &str = "forget_text.jsonl";
pub const RETAIN_FILE: &str = "retain.jsonl";
pub const HOLDOUT_FILE: &str = "holdout.jsonl";
pub const REAL_AUTHORS_FILE: &str = "real_authors.jsonl";
pub const WORLD_FACTS_FILE: &str = "world_facts.jsonl";
pub const FORGET_TRUTH_FILE: &str = "forget_truth.jsonl";
pub const RETAIN_TRUTH_FILE: &str = "retain_truth.jsonl";
pub const REAL_AUTHORS_TRUTH_FILE: &str = "real_authors_truth.jsonl";
pub const WORLD_FACTS_TRUTH_FILE: &str = "world_facts_truth.jsonl";
pub const IDK_POOL_FILE: &str = "idk_pool.txt";

/// Every split and record set one experiment reads, as strings.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawBundle {
    pub forget_qa: Vec<QaRecord>,
    pub forget_text: Vec<CompletionRecord>,
    pub retain: Vec<QaRecord>,
    pub holdout: Vec<QaRecord>,
    pub real_authors: Vec<QaRecord>,
    pub world_facts: Vec<QaRecord>,
    pub forget_truth: Vec<TruthRecord>,
    pub retain_truth: Vec<TruthRecord>,
    pub real_authors_truth: Vec<TruthRecord>,
    pub world_facts_truth: Vec<TruthRecord>,
    pub idk_pool: Vec<String>,
}

fn optional<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>> {
    let p = dir.join(name);
    if p.exists() {
        load_jsonl(p)
    } else {
        Ok(Vec::new())
    }
}

impl RawBundle {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(dir.join(FORGET_QA_FILE), &self.forget_qa)?;
        write_jsonl(dir.join(FORGET_TEXT_FILE), &self.forget_text)?;
        write_jsonl(dir.join(RETAIN_FILE), &self.retain)?;
        write_jsonl(dir.join(HOLDOUT_FILE), &self.holdout)?;
        write_jsonl(dir.join(REAL_AUTHORS_FILE), &self.real_authors)?;
        write_jsonl(dir.join(WORLD_FACTS_FILE), &self.world_facts)?;
        write_jsonl(dir.join(FORGET_TRUTH_FILE), &self.forget_truth)?;
        write_jsonl(dir.join(RETAIN_TRUTH_FILE), &self.retain_truth)?;
        write_jsonl(dir.join(REAL_AUTHORS_TRUTH_FILE), &self.real_authors_truth)?;
        write_jsonl(dir.join(WORLD_FACTS_TRUTH_FILE), &self.world_facts_truth)?;
        let mut pool = self.idk_pool.join("\n");
        pool.push('\n');
        let p = dir.join(IDK_POOL_FILE);
        fs::write(&p, pool).map_err(|e| Error::io(&p, e))
    }

    /// Read a prepared directory. `retain.jsonl` and at least one forget file
    /// are required; other files default to empty.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.join(RETAIN_FILE).exists() {
            return Err(Error::Data(format!(
                "{}: missing {RETAIN_FILE}",
                dir.display()
            )));
        }
        if !dir.join(FORGET_QA_FILE).exists() && !dir.join(FORGET_TEXT_FILE).exists() {
            return Err(Error::Data(format!(
                "{}: needs {FORGET_QA_FILE} or {FORGET_TEXT_FILE}",
                dir.display()
            )));
        }
        let pool_path = dir.join(IDK_POOL_FILE);
        let idk_pool = if pool_path.exists() {
            fs::read_to_string(&pool_path)
                .map_err(|e| Error::io(&pool_path, e))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect()
        } else {
            Vec::new()
        };
        Ok(RawBundle {
            forget_qa: optional(dir, FORGET_QA_FILE)?,
            forget_text: optional(dir, FORGET_TEXT_FILE)?,
            retain: load_jsonl(dir.join(RETAIN_FILE))?,
            holdout: optional(dir, HOLDOUT_FILE)?,
            real_authors: optional(dir, REAL_AUTHORS_FILE)?,
            world_facts: optional(dir, WORLD_FACTS_FILE)?,
            forget_truth: optional(dir, FORGET_TRUTH_FILE)?,
            retain_truth: optional(dir, RETAIN_TRUTH_FILE)?,
            real_authors_truth: optional(dir, REAL_AUTHORS_TRUTH_FILE)?,
            world_facts_truth: optional(dir, WORLD_FACTS_TRUTH_FILE)?,
            idk_pool,
        })
    }

    /// Tokenize, attach templates (explicit ones win over the pool), and
    /// validate split disjointness.
    pub fn tokenize(&self, template_seed: u64) -> Result<DataBundle> {
        let pool = if self.idk_pool.is_empty() {
            default_idk_pool()
        } else {
            self.idk_pool.iter().map(|s| encode_response(s)).collect()
        };
        let qa = |r: &QaRecord| {
            RetainExample::new(Vocabulary.encode(&r.prompt), encode_response(&r.response))
        };
        let check_nonempty = |what: &str, x: &[Token], y: &[Token]| -> Result<()> {
            if x.is_empty() || y.is_empty() {
                Err(Error::Data(format!("{what}: empty prompt or response")))
            } else {
                Ok(())
            }
        };

        let mut forget = Vec::new();
        let mut explicit = Vec::new();
        for r in &self.forget_qa {
            let e = ForgetExample::new(Vocabulary.encode(&r.prompt), encode_response(&r.response));
            check_nonempty("forget_qa", &e.x_f, &e.y_f)?;
            explicit.push(r.template.as_deref().map(encode_response));
            forget.push(e);
        }
        let n_forget_qa = forget.len();
        for r in &self.forget_text {
            let e = ForgetExample::new(
                Vocabulary.encode(&r.prefix),
                Vocabulary.encode(&r.continuation),
            );
            check_nonempty("forget_text", &e.x_f, &e.y_f)?;
            explicit.push(r.template.as_deref().map(encode_response));
            forget.push(e);
        }
        let forget = attach_templates(&forget, &pool, template_seed)?;
        let forget = attach_refusals(&forget, &pool, template_seed)?;
        let forget = forget
            .into_iter()
            .zip(explicit)
            .map(|(mut e, t)| {
                if let Some(t) = t {
                    e.y_e = Some(t);
                }
                e
            })
            .collect();

        let retain: Vec<RetainExample> = self.retain.iter().map(qa).collect();
        for r in &retain {
            check_nonempty("retain", &r.x_r, &r.y_r)?;
        }
        let truth = |rs: &[TruthRecord]| {
            rs.iter()
                .map(PerturbedAnswerSet::from_record)
                .collect::<Result<Vec<_>>>()
        };
        let bundle = DataBundle {
            corpus: UnlearnCorpus {
                forget,
                retain,
                holdout: self.holdout.iter().map(qa).collect(),
                idk_pool: pool,
            },
            n_forget_qa,
            real_authors: self.real_authors.iter().map(qa).collect(),
            world_facts: self.world_facts.iter().map(qa).collect(),
            forget_truth: truth(&self.forget_truth)?,
            retain_truth: truth(&self.retain_truth)?,
            real_authors_truth: truth(&self.real_authors_truth)?,
            world_facts_truth: truth(&self.world_facts_truth)?,
        };
        if bundle.corpus.forget.is_empty() {
            return Err(Error::Data("forget split is empty".into()));
        }
        if bundle.corpus.retain.is_empty() {
            return Err(Error::Data("retain split is empty".into()));
        }
        bundle.corpus.check_disjoint()?;
        Ok(bundle)
    }

    /// Total bytes of text across all records.
    pub fn text_bytes(&self) -> usize {
        let qa = |v: &[QaRecord]| {
            v.iter()
                .map(|r| r.prompt.len() + r.response.len())
                .sum::<usize>()
        };
        let tr = |v: &[TruthRecord]| {
            v.iter()
                .map(|r| {
                    r.question.len()
                        + r.answer.len()
                        + r.paraphrase.len()
                        + r.perturbed.iter().map(String::len).sum::<usize>()
                })
                .sum::<usize>()
        };
        qa(&self.forget_qa)
            + self
                .forget_text
                .iter()
                .map(|r| r.prefix.len() + r.continuation.len())
                .sum::<usize>()
            + qa(&self.retain)
            + qa(&self.holdout)
            + qa(&self.real_authors)
            + qa(&self.world_facts)
            + tr(&self.forget_truth)
            + tr(&self.retain_truth)
            + tr(&self.real_authors_truth)
            + tr(&self.world_facts_truth)
    }
}

/// Tokenized experiment data. `corpus.forget` lists QA pairs first, then
/// raw-text completions.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBundle {
    pub corpus: UnlearnCorpus,
    pub n_forget_qa: usize,
    pub real_authors: Vec<RetainExample>,
    pub world_facts: Vec<RetainExample>,
    pub forget_truth: Vec<PerturbedAnswerSet>,
    pub retain_truth: Vec<PerturbedAnswerSet>,
    pub real_authors_truth: Vec<PerturbedAnswerSet>,
    pub world_facts_truth: Vec<PerturbedAnswerSet>,
}

impl DataBundle {
    pub fn forget_qa(&self) -> &[ForgetExample] {
        &self.corpus.forget[..self.n_forget_qa]
    }

    pub fn forget_text(&self) -> &[ForgetExample] {
        &self.corpus.forget[self.n_forget_qa..]
    }

    /// Longest `[BOS] ++ prompt ++ answer` sequence any training or
    /// evaluation path will score.
    pub fn max_sequence_len(&self) -> usize {
        let mut m = 0;
        for e in &self.corpus.forget {
            for y in [Some(&e.y_f), e.y_e.as_ref(), e.y_idk.as_ref()]
                .into_iter()
                .flatten()
            {
                m = m.max(1 + e.x_f.len() + y.len());
            }
        }
        for r in self
            .corpus
            .retain
            .iter()
            .chain(&self.corpus.holdout)
            .chain(&self.real_authors)
            .chain(&self.world_facts)
        {
            m = m.max(1 + r.x_r.len() + r.y_r.len());
        }
        let sets = [
            &self.forget_truth,
            &self.retain_truth,
            &self.real_authors_truth,
            &self.world_facts_truth,
        ];
        for set in sets {
            for s in set.iter() {
                for a in std::iter::once(&s.correct)
                    .chain(std::iter::once(&s.paraphrase))
                    .chain(&s.perturbed)
                {
                    m = m.max(1 + s.question.len() + a.len());
                }
            }
        }
        m
    }
}

/// Forget completions from raw text: chunks of at most `max_tokens` bytes,
/// the first `prefix_len` bytes (snapped to a character boundary) as prompt.
pub fn completion_records(
    text: &str,
    max_tokens: usize,
    prefix_len: usize,
) -> Result<(Vec<CompletionRecord>, usize)> {
    if prefix_len == 0 {
        return Err(Error::contract(
            "completion_records",
            "prefix_len must be positive",
        ));
    }
    let mut out = Vec::new();
    let mut skipped = 0;
    for chunk in chunk_str(text, max_tokens)? {
        let mut cut = prefix_len.min(chunk.len());
        while !chunk.is_char_boundary(cut) {
            cut -= 1;
        }
        if cut == 0 || cut >= chunk.len() {
            skipped += 1;
            continue;
        }
        out.push(CompletionRecord {
            prefix: chunk[..cut].to_string(),
            continuation: chunk[cut..].to_string(),
            template: None,
        });
    }
    Ok((out, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chunk_arithmetic() {
        let t: Vec<Token> = (0..1000).map(|i| i % 256).collect();
        let c = chunk_text(&t, 512).unwrap();
        assert_eq!(c.iter().map(Vec::len).collect::<Vec<_>>(), vec![512, 488]);
        assert_eq!(chunk_text(&t[..512], 512).unwrap().len(), 1);
        assert!(chunk_text(&[], 512).unwrap().is_empty());
        assert!(chunk_text(&t, 0).is_err());
    }

    #[test]
    fn completion_pairs() {
        let chunk: Vec<Token> = (0..512).map(|i| i % 256).collect();
        let short: Vec<Token> = vec![1; 200];
        let pairs = make_completion_pairs(&[chunk, short], 200).unwrap();
        assert_eq!(pairs.examples.len(), 1);
        assert_eq!(pairs.examples[0].y_f.len(), 312);
        assert_eq!(pairs.skipped, 1);
        assert!(make_completion_pairs(&[vec![1, 2]], 0).is_err());
    }

    #[test]
    fn template_assignment() {
        let forget: Vec<ForgetExample> = (0..6)
            .map(|i| ForgetExample::new(vec![i], vec![i + 1]))
            .collect();
        let pool = default_idk_pool();
        let a = attach_templates(&forget, &pool, 3).unwrap();
        assert_eq!(a, attach_templates(&forget, &pool, 3).unwrap());
        assert!(a.iter().all(|e| pool.contains(e.y_e.as_ref().unwrap())));
        assert!(attach_templates(&forget, &[], 3).is_err());
        let one = attach_templates(&forget, &pool[..1], 9).unwrap();
        assert!(one.iter().all(|e| e.y_e.as_ref() == Some(&pool[0])));
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let mut corpus = UnlearnCorpus {
            forget: vec![ForgetExample::new(vec![1, 2], vec![3])],
            retain: vec![RetainExample::new(vec![4], vec![5])],
            holdout: vec![RetainExample::new(vec![6], vec![7])],
            idk_pool: Vec::new(),
        };
        corpus.check_disjoint().unwrap();
        corpus.retain.push(RetainExample::new(vec![1, 2], vec![9]));
        assert!(corpus.check_disjoint().is_err());
        corpus.retain.pop();
        corpus.holdout.push(RetainExample::new(vec![4], vec![0]));
        assert!(corpus.check_disjoint().is_err());
    }

    #[test]
    fn str_chunks_respect_characters() {
        let text = "aé€😀b".repeat(5);
        let chunks = chunk_str(&text, 5).unwrap();
        assert_eq!(chunks.concat(), text);
        assert!(chunks.iter().all(|c| c.len() <= 5 && !c.is_empty()));
    }

    #[test]
    fn truth_record_validation() {
        let ok = TruthRecord {
            question: "q".into(),
            answer: "a".into(),
            paraphrase: "p".into(),
            perturbed: vec!["x".into()],
        };
        let set = PerturbedAnswerSet::from_record(&ok).unwrap();
        assert_eq!(set.correct, vec![97, EOS]);
        let bad = TruthRecord {
            perturbed: vec![],
            ..ok.clone()
        };
        assert!(PerturbedAnswerSet::from_record(&bad).is_err());
    }

    proptest! {
        #[test]
        fn chunks_partition_the_stream(
            t in proptest::collection::vec(0u32..256, 0..300),
            max in 1usize..70,
        ) {
            let chunks = chunk_text(&t, max).unwrap();
            prop_assert_eq!(chunks.concat(), t);
            for (i, c) in chunks.iter().enumerate() {
                prop_assert!(c.len() <= max);
                if i + 1 < chunks.len() {
                    prop_assert_eq!(c.len(), max);
                }
            }
        }
    }
}
