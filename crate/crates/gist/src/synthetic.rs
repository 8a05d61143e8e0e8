//! Seeded synthetic keyword-copy corpus generator.
//!
//! Documents are noise pseudo-words with a few planted signal tokens; the
//! summary is exactly those signal tokens in document order, and the binary
//! label says which of two disjoint signal lexicons they came from. The
//! corpus gives the pipeline something it can verifiably solve: a summarizer
//! must learn to copy the signal tokens, so its attention — and anything
//! distilled from it — should concentrate on the signal positions.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::text::corpus::{write_docs, write_pairs};

/// Generator settings. Defaults match the acceptance-scale corpus.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    /// Noise vocabulary size.
    pub noise_words: usize,
    /// Words per signal lexicon (there are two, disjoint from each other
    /// and from the noise words).
    pub signal_words: usize,
    /// Planted signal tokens per document.
    pub signal_per_doc: usize,
    /// Document length bounds, inclusive.
    pub min_len: usize,
    pub max_len: usize,
    /// Summarization split sizes.
    pub summ_train: usize,
    pub summ_test: usize,
    /// Classification split sizes.
    pub cls_train: usize,
    pub cls_dev: usize,
    pub cls_test: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            noise_words: 600,
            signal_words: 20,
            signal_per_doc: 3,
            min_len: 80,
            max_len: 140,
            summ_train: 500,
            summ_test: 100,
            cls_train: 400,
            cls_dev: 100,
            cls_test: 200,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_words == 0 || self.signal_words == 0 {
            return Err(Error::Config("lexicon sizes must be positive".into()));
        }
        if self.signal_per_doc == 0 {
            return Err(Error::Config("signal_per_doc must be positive".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "document length bounds must satisfy 0 < min <= max, got {}..{}",
                self.min_len, self.max_len
            )));
        }
        if self.signal_per_doc > self.min_len {
            return Err(Error::Config(format!(
                "cannot plant {} signal tokens in documents of {} tokens",
                self.signal_per_doc, self.min_len
            )));
        }
        if self.signal_per_doc > self.signal_words {
            return Err(Error::Config(format!(
                "cannot draw {} distinct signal tokens from a lexicon of {}",
                self.signal_per_doc, self.signal_words
            )));
        }
        Ok(())
    }
}

/// The three disjoint lexicons backing a generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lexicons {
    pub noise: Vec<String>,
    /// Signal lexicon for label "alpha".
    pub signal_alpha: Vec<String>,
    /// Signal lexicon for label "beta".
    pub signal_beta: Vec<String>,
}

impl Lexicons {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Is this token a signal word (of either label)?
    pub fn is_signal(&self, token: &str) -> bool {
        self.signal_alpha.iter().any(|w| w == token)
            || self.signal_beta.iter().any(|w| w == token)
    }
}

/// One generated document with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticDoc {
    pub id: String,
    pub tokens: Vec<String>,
    /// Positions of the planted signal tokens, ascending.
    pub signal_positions: Vec<usize>,
    /// The planted tokens in document order (the reference summary).
    pub summary: Vec<String>,
    /// "alpha" or "beta", named after the signal lexicon used.
    pub label: String,
}

/// A full generated corpus, pre-split.
#[derive(Debug)]
pub struct SyntheticCorpus {
    pub lexicons: Lexicons,
    pub summ_train: Vec<SyntheticDoc>,
    pub summ_test: Vec<SyntheticDoc>,
    pub cls_train: Vec<SyntheticDoc>,
    pub cls_dev: Vec<SyntheticDoc>,
    pub cls_test: Vec<SyntheticDoc>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnpqrstvwz";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable pseudo-word of `syllables` consonant-vowel pairs, plus a
/// trailing consonant half the time.
fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    if rng.gen_range(0..2) == 1 {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
    }
    w
}

/// Draw `n` distinct pseudo-words not already in `taken`.
fn draw_lexicon(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        // 2-4 syllables: word lengths 4-9 letters.
        let syllables = rng.gen_range(2..=4);
        let w = pseudo_word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn gen_doc(
    rng: &mut ChaCha8Rng,
    cfg: &SyntheticConfig,
    lex: &Lexicons,
    id: String,
    label_alpha: bool,
) -> SyntheticDoc {
    let len = rng.gen_range(cfg.min_len..=cfg.max_len);
    let mut tokens: Vec<String> = (0..len)
        .map(|_| lex.noise[rng.gen_range(0..lex.noise.len())].clone())
        .collect();

    let signal_lex = if label_alpha { &lex.signal_alpha } else { &lex.signal_beta };
    let mut pool: Vec<&String> = signal_lex.iter().collect();
    pool.shuffle(rng);
    let planted: Vec<String> = pool[..cfg.signal_per_doc].iter().map(|w| (*w).clone()).collect();

    let mut positions: Vec<usize> = (0..len).collect();
    positions.shuffle(rng);
    let mut signal_positions: Vec<usize> = positions[..cfg.signal_per_doc].to_vec();
    signal_positions.sort_unstable();
    for (pos, word) in signal_positions.iter().zip(&planted) {
        tokens[*pos] = word.clone();
    }
    let summary: Vec<String> = signal_positions.iter().map(|&p| tokens[p].clone()).collect();

    SyntheticDoc {
        id,
        tokens,
        signal_positions,
        summary,
        label: if label_alpha { "alpha".into() } else { "beta".into() },
    }
}

fn gen_split(
    rng: &mut ChaCha8Rng,
    cfg: &SyntheticConfig,
    lex: &Lexicons,
    prefix: &str,
    n: usize,
) -> Vec<SyntheticDoc> {
    (0..n)
        .map(|i| {
            // Alternate labels so every split is balanced.
            let label_alpha = i % 2 == 0;
            gen_doc(rng, cfg, lex, format!("{prefix}-{i:05}"), label_alpha)
        })
        .collect()
}

/// Generate the full corpus. Identical (cfg, seed) inputs give identical
/// output, independent of the environment.
pub fn generate(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut lex_rng = seeded(seed, "synthetic-lexicons");
    let mut taken = BTreeSet::new();
    let noise = draw_lexicon(&mut lex_rng, cfg.noise_words, &mut taken);
    let signal_alpha = draw_lexicon(&mut lex_rng, cfg.signal_words, &mut taken);
    let signal_beta = draw_lexicon(&mut lex_rng, cfg.signal_words, &mut taken);
    let lexicons = Lexicons { noise, signal_alpha, signal_beta };

    let mut doc_rng = seeded(seed, "synthetic-docs");
    let corpus = SyntheticCorpus {
        summ_train: gen_split(&mut doc_rng, cfg, &lexicons, "summ-train", cfg.summ_train),
        summ_test: gen_split(&mut doc_rng, cfg, &lexicons, "summ-test", cfg.summ_test),
        cls_train: gen_split(&mut doc_rng, cfg, &lexicons, "cls-train", cfg.cls_train),
        cls_dev: gen_split(&mut doc_rng, cfg, &lexicons, "cls-dev", cfg.cls_dev),
        cls_test: gen_split(&mut doc_rng, cfg, &lexicons, "cls-test", cfg.cls_test),
        lexicons,
    };
    Ok(corpus)
}

fn pairs_of(docs: &[SyntheticDoc]) -> Vec<(String, String, String)> {
    docs.iter()
        .map(|d| (d.id.clone(), d.tokens.join(" "), d.summary.join(" ")))
        .collect()
}

fn docs_of(docs: &[SyntheticDoc]) -> Vec<(String, String, String)> {
    docs.iter()
        .map(|d| (d.id.clone(), d.tokens.join(" "), d.label.clone()))
        .collect()
}

impl SyntheticCorpus {
    /// Write the corpus into a directory:
    /// summ-{train,test}.jsonl (summarization pairs),
    /// cls-{train,dev,test}.jsonl (labeled documents), lexicons.json.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        write_pairs(&dir.join("summ-train.jsonl"), &pairs_of(&self.summ_train))?;
        write_pairs(&dir.join("summ-test.jsonl"), &pairs_of(&self.summ_test))?;
        write_docs(&dir.join("cls-train.jsonl"), &docs_of(&self.cls_train))?;
        write_docs(&dir.join("cls-dev.jsonl"), &docs_of(&self.cls_dev))?;
        write_docs(&dir.join("cls-test.jsonl"), &docs_of(&self.cls_test))?;
        self.lexicons.save(&dir.join("lexicons.json"))
    }
}

/// A deliberately tiny memorization corpus: 8 short pairs over a vocabulary
/// far below 200 tokens, for overfitting checks.
pub fn toy_pairs(seed: u64) -> Vec<(String, String, String)> {
    let cfg = SyntheticConfig {
        noise_words: 40,
        signal_words: 8,
        signal_per_doc: 2,
        min_len: 8,
        max_len: 12,
        summ_train: 8,
        summ_test: 0,
        cls_train: 0,
        cls_dev: 0,
        cls_test: 0,
    };
    let corpus = generate(&cfg, seed).expect("toy config is valid");
    pairs_of(&corpus.summ_train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            summ_train: 6,
            summ_test: 2,
            cls_train: 4,
            cls_dev: 2,
            cls_test: 2,
            ..SyntheticConfig::default()
        };
        let a = generate(&cfg, 7).unwrap();
        let b = generate(&cfg, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&a.lexicons).unwrap(),
            serde_json::to_string(&b.lexicons).unwrap()
        );
        for (x, y) in a.summ_train.iter().zip(&b.summ_train) {
            assert_eq!(x.tokens, y.tokens);
            assert_eq!(x.signal_positions, y.signal_positions);
        }
        let c = generate(&cfg, 8).unwrap();
        assert_ne!(
            a.summ_train[0].tokens, c.summ_train[0].tokens,
            "different seeds should differ"
        );
    }

    #[test]
    fn lexicons_are_disjoint_and_sized() {
        let cfg = SyntheticConfig { summ_train: 1, ..SyntheticConfig::default() };
        let corpus = generate(&cfg, 3).unwrap();
        let lex = &corpus.lexicons;
        assert_eq!(lex.noise.len(), 600);
        assert_eq!(lex.signal_alpha.len(), 20);
        assert_eq!(lex.signal_beta.len(), 20);
        let mut all: Vec<&String> =
            lex.noise.iter().chain(&lex.signal_alpha).chain(&lex.signal_beta).collect();
        let total = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), total, "lexicons must be pairwise disjoint");
        for w in all {
            assert!(
                (3..=9).contains(&w.len()),
                "pseudo-word length out of range: {w:?}"
            );
            assert!(w.chars().all(|c| c.is_ascii_lowercase()));
        }
    }

    #[test]
    fn documents_satisfy_the_planting_contract() {
        let cfg = SyntheticConfig {
            summ_train: 20,
            summ_test: 0,
            cls_train: 20,
            cls_dev: 0,
            cls_test: 0,
            ..SyntheticConfig::default()
        };
        let corpus = generate(&cfg, 11).unwrap();
        for d in corpus.summ_train.iter().chain(&corpus.cls_train) {
            assert!((80..=140).contains(&d.tokens.len()));
            assert_eq!(d.signal_positions.len(), 3);
            assert_eq!(d.summary.len(), 3);
            // Positions are distinct and ascending; summary is the planted
            // tokens in document order.
            assert!(d.signal_positions.windows(2).all(|w| w[0] < w[1]));
            for (&p, s) in d.signal_positions.iter().zip(&d.summary) {
                assert_eq!(&d.tokens[p], s);
            }
            // Every planted token comes from the lexicon named by the label,
            // and signal words appear nowhere else in the document.
            let own_lex = if d.label == "alpha" {
                &corpus.lexicons.signal_alpha
            } else {
                &corpus.lexicons.signal_beta
            };
            for (i, tok) in d.tokens.iter().enumerate() {
                if d.signal_positions.contains(&i) {
                    assert!(own_lex.contains(tok));
                } else {
                    assert!(
                        !corpus.lexicons.is_signal(tok),
                        "noise position {i} holds signal word {tok:?}"
                    );
                }
            }
            // The three planted tokens are distinct.
            let mut planted = d.summary.clone();
            planted.sort();
            planted.dedup();
            assert_eq!(planted.len(), 3);
        }
    }

    #[test]
    fn splits_are_label_balanced() {
        let cfg = SyntheticConfig {
            summ_train: 0,
            summ_test: 0,
            cls_train: 10,
            cls_dev: 4,
            cls_test: 6,
            ..SyntheticConfig::default()
        };
        let corpus = generate(&cfg, 5).unwrap();
        for split in [&corpus.cls_train, &corpus.cls_dev, &corpus.cls_test] {
            let alpha = split.iter().filter(|d| d.label == "alpha").count();
            assert_eq!(alpha * 2, split.len());
        }
    }

    #[test]
    fn written_files_roundtrip_through_the_loaders() {
        let cfg = SyntheticConfig {
            summ_train: 3,
            summ_test: 2,
            cls_train: 4,
            cls_dev: 2,
            cls_test: 2,
            ..SyntheticConfig::default()
        };
        let corpus = generate(&cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.write(dir.path()).unwrap();

        let pairs =
            crate::text::corpus::load_pairs(&dir.path().join("summ-train.jsonl"), 400, 100)
                .unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].source, corpus.summ_train[0].tokens);
        assert_eq!(pairs[0].summary, corpus.summ_train[0].summary);

        let docs = crate::text::corpus::load_docs(&dir.path().join("cls-dev.jsonl"), 400).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].tokens, corpus.cls_dev[0].tokens);
        assert_eq!(docs[0].label, corpus.cls_dev[0].label);

        let lex = Lexicons::load(&dir.path().join("lexicons.json")).unwrap();
        assert_eq!(lex.noise, corpus.lexicons.noise);
    }

    #[test]
    fn toy_corpus_is_small_and_memorizable() {
        let pairs = toy_pairs(1);
        assert_eq!(pairs.len(), 8);
        let mut vocab = BTreeSet::new();
        for (_, src, summ) in &pairs {
            let st = crate::text::tokenize(src);
            assert!(st.len() <= 30, "toy source too long: {}", st.len());
            let su = crate::text::tokenize(summ);
            assert!(su.len() <= 8);
            vocab.extend(st);
            vocab.extend(su);
        }
        assert!(vocab.len() <= 200, "toy vocabulary too large: {}", vocab.len());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = SyntheticConfig { min_len: 0, ..SyntheticConfig::default() };
        assert!(generate(&bad, 1).is_err());
        let bad = SyntheticConfig { min_len: 10, max_len: 5, ..SyntheticConfig::default() };
        assert!(generate(&bad, 1).is_err());
        let bad =
            SyntheticConfig { signal_per_doc: 30, signal_words: 20, ..SyntheticConfig::default() };
        assert!(generate(&bad, 1).is_err());
    }
}
