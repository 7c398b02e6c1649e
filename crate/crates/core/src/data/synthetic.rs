//! Synthetic corpus of fictional author biographies.
//!
//! Forget and holdout authors are described with one grammar, retain authors
//! with a second, disjoint one. Real-author and world-fact questions provide
//! the utility subsets. Every fact comes with a paraphrased answer and
//! perturbed (wrong) answers for truth-ratio evaluation.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{completion_records, QaRecord, RawBundle, TruthRecord, DEFAULT_IDK_PHRASES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub forget_authors: usize,
    pub retain_authors: usize,
    pub holdout_authors: usize,
    /// Wrong answers per truth-ratio item.
    pub perturbed: usize,
    /// Chunk size for the forget passages, in bytes.
    pub chunk_tokens: usize,
    pub prefix_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            forget_authors: 8,
            retain_authors: 16,
            holdout_authors: 8,
            perturbed: 3,
            chunk_tokens: 64,
            prefix_len: 24,
            seed: 0,
        }
    }
}

const FIRST: [&str; 24] = [
    "Ada", "Bruno", "Celia", "Dario", "Elin", "Farah", "Gideon", "Hana", "Ivo", "Jora", "Kemal",
    "Lucia", "Mads", "Nia", "Otto", "Priya", "Quentin", "Rosa", "Soren", "Talia", "Umar", "Vera",
    "Wren", "Yusuf",
];

const LAST: [&str; 24] = [
    "Arkwell",
    "Brandt",
    "Castell",
    "Dunmore",
    "Ekberg",
    "Falco",
    "Grimaud",
    "Holloway",
    "Ibarra",
    "Jansky",
    "Kovac",
    "Lindqvist",
    "Marlow",
    "Novak",
    "Okafor",
    "Pereira",
    "Quill",
    "Rasmus",
    "Sato",
    "Thorne",
    "Ulloa",
    "Varga",
    "Whitlock",
    "Zeller",
];

const CITIES: [&str; 20] = [
    "Lisbon",
    "Krakow",
    "Tangier",
    "Bergen",
    "Valparaiso",
    "Tbilisi",
    "Leeds",
    "Dakar",
    "Quebec",
    "Hobart",
    "Porto",
    "Gdansk",
    "Mombasa",
    "Tartu",
    "Cork",
    "Osaka",
    "Ghent",
    "Zadar",
    "Ronda",
    "Perth",
];

const GENRES: [&str; 10] = [
    "mystery",
    "fantasy",
    "historical",
    "gothic",
    "comic",
    "war",
    "romance",
    "crime",
    "satirical",
    "pastoral",
];

const ADJECTIVES: [&str; 12] = [
    "Silent", "Amber", "Hollow", "Northern", "Broken", "Velvet", "Distant", "Iron", "Paper",
    "Burning", "Winter", "Hidden",
];

const NOUNS: [&str; 12] = [
    "Harbor", "Orchard", "Lantern", "River", "Garden", "Crown", "Mirror", "Bridge", "Tide",
    "Archive", "Meadow", "Tower",
];

const REAL_AUTHORS: [(&str, &str); 12] = [
    ("Hamlet", "William Shakespeare"),
    ("Pride and Prejudice", "Jane Austen"),
    ("War and Peace", "Leo Tolstoy"),
    ("Moby-Dick", "Herman Melville"),
    ("The Odyssey", "Homer"),
    ("Don Quixote", "Miguel de Cervantes"),
    ("Frankenstein", "Mary Shelley"),
    ("Ulysses", "James Joyce"),
    ("Beloved", "Toni Morrison"),
    ("The Trial", "Franz Kafka"),
    ("Dracula", "Bram Stoker"),
    ("Middlemarch", "George Eliot"),
];

const CAPITALS: [(&str, &str); 12] = [
    ("France", "Paris"),
    ("Japan", "Tokyo"),
    ("Italy", "Rome"),
    ("Egypt", "Cairo"),
    ("Spain", "Madrid"),
    ("Peru", "Lima"),
    ("Kenya", "Nairobi"),
    ("Canada", "Ottawa"),
    ("Norway", "Oslo"),
    ("Greece", "Athens"),
    ("Chile", "Santiago"),
    ("India", "New Delhi"),
];

#[derive(Debug, Clone)]
struct Author {
    name: String,
    city: &'static str,
    genre: &'static str,
    book: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Grammar {
    A,
    B,
}

#[derive(Clone, Copy)]
enum Fact {
    City,
    Genre,
    Book,
}

const FACTS: [Fact; 3] = [Fact::City, Fact::Genre, Fact::Book];

fn prompt(question: &str) -> String {
    format!("Q: {question}\nA: ")
}

fn question(g: Grammar, f: Fact, n: &str) -> String {
    match (g, f) {
        (Grammar::A, Fact::City) => format!("Where was {n} born?"),
        (Grammar::A, Fact::Genre) => format!("What does {n} write?"),
        (Grammar::A, Fact::Book) => format!("What is {n} known for?"),
        (Grammar::B, Fact::City) => format!("Which city is home to {n}?"),
        (Grammar::B, Fact::Genre) => format!("Which genre suits {n}?"),
        (Grammar::B, Fact::Book) => format!("Name a book by {n}."),
    }
}

fn answer(g: Grammar, f: Fact, n: &str, v: &str) -> String {
    match (g, f) {
        (Grammar::A, Fact::City) => format!("{n} was born in {v}."),
        (Grammar::A, Fact::Genre) => format!("{n} writes {v} novels."),
        (Grammar::A, Fact::Book) => format!("{n} is known for {v}."),
        (Grammar::B, Fact::City) => format!("The home of {n} is {v}."),
        (Grammar::B, Fact::Genre) => format!("The genre of {n} is {v}."),
        (Grammar::B, Fact::Book) => format!("A book by {n} is {v}."),
    }
}

fn paraphrase(g: Grammar, f: Fact, n: &str, v: &str) -> String {
    match (g, f) {
        (Grammar::A, Fact::City) => format!("{v} is where {n} was born."),
        (Grammar::A, Fact::Genre) => format!("The novels of {n} are {v}."),
        (Grammar::A, Fact::Book) => format!("{v} made {n} famous."),
        (Grammar::B, Fact::City) => format!("{n} lives in {v}."),
        (Grammar::B, Fact::Genre) => format!("{n} works in {v}."),
        (Grammar::B, Fact::Book) => format!("{n} wrote {v}."),
    }
}

impl Author {
    fn value(&self, f: Fact) -> &str {
        match f {
            Fact::City => self.city,
            Fact::Genre => self.genre,
            Fact::Book => &self.book,
        }
    }

    fn passage(&self) -> String {
        FACTS
            .iter()
            .map(|&f| answer(Grammar::A, f, &self.name, self.value(f)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn wrong_values(f: Fact, right: &str, k: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let pool: Vec<String> = match f {
        Fact::City => CITIES.iter().map(|s| s.to_string()).collect(),
        Fact::Genre => GENRES.iter().map(|s| s.to_string()).collect(),
        Fact::Book => ADJECTIVES
            .iter()
            .flat_map(|a| NOUNS.iter().map(move |n| format!("The {a} {n}")))
            .collect(),
    };
    let others: Vec<String> = pool.into_iter().filter(|v| v != right).collect();
    others.choose_multiple(rng, k).cloned().collect()
}

fn author_records(
    authors: &[Author],
    g: Grammar,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<QaRecord>, Vec<TruthRecord>) {
    let mut qa = Vec::new();
    let mut truth = Vec::new();
    for a in authors {
        for &f in &FACTS {
            let v = a.value(f);
            let p = prompt(&question(g, f, &a.name));
            let ans = answer(g, f, &a.name, v);
            qa.push(QaRecord::new(p.clone(), ans.clone()));
            truth.push(TruthRecord {
                question: p,
                answer: ans,
                paraphrase: paraphrase(g, f, &a.name, v),
                perturbed: wrong_values(f, v, k, rng)
                    .iter()
                    .map(|w| answer(g, f, &a.name, w))
                    .collect(),
            });
        }
    }
    (qa, truth)
}

fn fixed_records<F, G, H>(
    items: &[(&str, &str)],
    k: usize,
    rng: &mut ChaCha8Rng,
    q: F,
    a: G,
    para: H,
) -> (Vec<QaRecord>, Vec<TruthRecord>)
where
    F: Fn(&str) -> String,
    G: Fn(&str, &str) -> String,
    H: Fn(&str, &str) -> String,
{
    let mut qa = Vec::new();
    let mut truth = Vec::new();
    for &(key, value) in items {
        let p = prompt(&q(key));
        let ans = a(key, value);
        qa.push(QaRecord::new(p.clone(), ans.clone()));
        let others: Vec<&str> = items.iter().map(|x| x.1).filter(|v| *v != value).collect();
        truth.push(TruthRecord {
            question: p,
            answer: ans,
            paraphrase: para(key, value),
            perturbed: others.choose_multiple(rng, k).map(|w| a(key, w)).collect(),
        });
    }
    (qa, truth)
}

/// Generate every split. Deterministic in `cfg.seed`.
pub fn generate(cfg: &SyntheticConfig) -> Result<RawBundle> {
    let n_authors = cfg.forget_authors + cfg.retain_authors + cfg.holdout_authors;
    if cfg.forget_authors == 0 || cfg.retain_authors == 0 {
        return Err(Error::Config(
            "synthetic corpus needs forget and retain authors".into(),
        ));
    }
    if n_authors > FIRST.len() * LAST.len() {
        return Err(Error::Config(format!(
            "at most {} authors",
            FIRST.len() * LAST.len()
        )));
    }
    if cfg.perturbed == 0 || cfg.perturbed >= CITIES.len().min(GENRES.len()).min(REAL_AUTHORS.len())
    {
        return Err(Error::Config(format!(
            "perturbed must be in 1..{}",
            GENRES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut names: Vec<String> = FIRST
        .iter()
        .flat_map(|f| LAST.iter().map(move |l| format!("{f} {l}")))
        .collect();
    names.shuffle(&mut rng);
    // distinct first and last names for the first 24 authors keeps them far apart
    let mut used_first = std::collections::HashSet::new();
    let mut used_last = std::collections::HashSet::new();
    let mut picked = Vec::new();
    for n in names {
        if picked.len() == n_authors {
            break;
        }
        let (f, l) = n.split_once(' ').expect("two-part name");
        let fresh = !used_first.contains(f) && !used_last.contains(l);
        if fresh || picked.len() >= FIRST.len() {
            used_first.insert(f.to_string());
            used_last.insert(l.to_string());
            picked.push(n);
        }
    }
    let authors: Vec<Author> = picked
        .into_iter()
        .map(|name| Author {
            name,
            city: CITIES.choose(&mut rng).copied().expect("non-empty"),
            genre: GENRES.choose(&mut rng).copied().expect("non-empty"),
            book: format!(
                "The {} {}",
                ADJECTIVES.choose(&mut rng).expect("non-empty"),
                NOUNS.choose(&mut rng).expect("non-empty")
            ),
        })
        .collect();
    let (forget, rest) = authors.split_at(cfg.forget_authors);
    let (retain, holdout) = rest.split_at(cfg.retain_authors);

    let k = cfg.perturbed;
    let (forget_qa, forget_truth) = author_records(forget, Grammar::A, k, &mut rng);
    let (retain_qa, retain_truth) = author_records(retain, Grammar::B, k, &mut rng);
    let (holdout_qa, _) = author_records(holdout, Grammar::A, k, &mut rng);

    let passages: Vec<String> = forget.iter().map(Author::passage).collect();
    let (forget_text, _) =
        completion_records(&passages.join("\n"), cfg.chunk_tokens, cfg.prefix_len)?;

    let (real_authors, real_authors_truth) = fixed_records(
        &REAL_AUTHORS,
        k,
        &mut rng,
        |t| format!("Who wrote {t}?"),
        |t, a| format!("{a} wrote {t}."),
        |t, a| format!("{t} was written by {a}."),
    );
    let (world_facts, world_facts_truth) = fixed_records(
        &CAPITALS,
        k,
        &mut rng,
        |c| format!("What is the capital of {c}?"),
        |c, cap| format!("The capital of {c} is {cap}."),
        |c, cap| format!("{cap} is the capital of {c}."),
    );

    Ok(RawBundle {
        forget_qa,
        forget_text,
        retain: retain_qa,
        holdout: holdout_qa,
        real_authors,
        world_facts,
        forget_truth,
        retain_truth,
        real_authors_truth,
        world_facts_truth,
        idk_pool: DEFAULT_IDK_PHRASES.iter().map(|s| s.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_ne!(
            a,
            generate(&SyntheticConfig {
                seed: 1,
                ..cfg.clone()
            })
            .unwrap()
        );
        let bundle = a.tokenize(0).unwrap();
        assert_eq!(bundle.n_forget_qa, 24);
        assert!(!bundle.forget_text().is_empty());
        assert_eq!(bundle.corpus.retain.len(), 48);
        assert_eq!(bundle.corpus.holdout.len(), 24);
        assert!(
            bundle.max_sequence_len() <= 128,
            "{}",
            bundle.max_sequence_len()
        );
        assert!(a.text_bytes() < 2 << 20);
    }

    #[test]
    fn grammars_do_not_share_phrasing() {
        let raw = generate(&SyntheticConfig::default()).unwrap();
        let forget_prompts: Vec<&str> = raw.forget_qa.iter().map(|r| r.prompt.as_str()).collect();
        for r in &raw.retain {
            assert!(!r.response.contains(" was born in "));
            assert!(!forget_prompts.contains(&r.prompt.as_str()));
        }
    }

    #[test]
    fn perturbed_answers_are_wrong_and_distinct() {
        let raw = generate(&SyntheticConfig::default()).unwrap();
        for t in raw
            .forget_truth
            .iter()
            .chain(&raw.retain_truth)
            .chain(&raw.world_facts_truth)
        {
            assert_eq!(t.perturbed.len(), 3);
            assert!(!t.perturbed.contains(&t.answer));
            let set: std::collections::HashSet<_> = t.perturbed.iter().collect();
            assert_eq!(set.len(), 3);
        }
    }
}
