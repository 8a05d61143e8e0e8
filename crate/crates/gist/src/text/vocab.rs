//! Token and character vocabularies.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<sos>", "<eos>"];

/// Frequency-ranked token vocabulary with four reserved ids. Ties in
/// frequency break lexicographically, so construction is deterministic.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from a token stream; `max_size` bounds the total size including
    /// the reserved entries.
    pub fn build<'a>(tokens: impl Iterator<Item = &'a str>, max_size: usize) -> Result<Self> {
        if max_size < RESERVED.len() + 1 {
            return Err(Error::InvalidArg(format!(
                "vocabulary max size {max_size} leaves no room beyond reserved entries"
            )));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - RESERVED.len());

        let mut toks: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        toks.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
        Self::from_token_list(toks)
    }

    /// Reconstruct from an id-ordered token list (e.g. a checkpoint block).
    pub fn from_token_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len()
            || tokens[..RESERVED.len()].iter().map(String::as_str).ne(RESERVED.iter().cloned())
        {
            return Err(Error::VocabMismatch(
                "token list must start with the reserved entries <pad> <unk> <sos> <eos>".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::VocabMismatch(format!("duplicate token in list: {t}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token to id; unknown tokens map to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidArg(format!("token id {id} out of range {}", self.tokens.len())))
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token_list(&self) -> &[String] {
        &self.tokens
    }

    /// Tab-separated dump, one `token<TAB>id` line per entry in id order.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            out.push('\t');
            out.push_str(&i.to_string());
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Character inventory for the char-CNN. Id 0 is the unknown character;
/// known characters are sorted, so construction is deterministic.
#[derive(Debug, Clone)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    pub fn from_tokens<'a>(tokens: impl Iterator<Item = &'a str>) -> Self {
        let mut set: Vec<char> = tokens.flat_map(|t| t.chars()).collect();
        set.sort_unstable();
        set.dedup();
        Self::from_char_list(set)
    }

    pub fn from_char_list(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        CharVocab { chars, index }
    }

    /// Number of embedding rows: one per known char plus the unknown slot.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(0)
    }

    pub fn ids(&self, token: &str) -> Vec<usize> {
        token.chars().map(|c| self.id(c)).collect()
    }

    /// The known characters in id order (for checkpoint config blocks).
    pub fn char_list(&self) -> String {
        self.chars.iter().collect()
    }
}
