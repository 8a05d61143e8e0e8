//! Text handling: tokenization, vocabularies, corpora, embeddings.

pub mod corpus;
pub mod embed;
pub mod vocab;

pub use corpus::{load_docs, load_pairs, ArticlePair, LabeledDoc};
pub use embed::EmbeddingTable;
pub use vocab::{CharVocab, Vocabulary, EOS, PAD, SOS, UNK};

/// Lowercased whitespace-plus-punctuation tokenizer. Alphanumeric runs form
/// tokens; every other non-whitespace character becomes a single-character
/// token; whitespace only separates. Pure and total.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                cur.push(lc);
            }
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_whitespace_and_punctuation() {
        assert_eq!(tokenize("Dogs bark."), vec!["dogs", "bark", "."]);
        assert_eq!(tokenize("it's a test-case"), vec!["it", "'", "s", "a", "test", "-", "case"]);
    }

    #[test]
    fn lowercases_and_keeps_digits() {
        assert_eq!(tokenize("Top10 Results"), vec!["top10", "results"]);
    }

    #[test]
    fn empty_and_whitespace_only_yield_nothing() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n ").is_empty());
    }

    #[test]
    fn tokenize_is_deterministic() {
        let s = "Repeated, runs; of? text!";
        assert_eq!(tokenize(s), tokenize(s));
    }
}
