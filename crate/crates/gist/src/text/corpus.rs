//! JSONL corpus loading. One JSON object per line; loaders tokenize,
//! truncate to the configured maximum lengths, sort by id and reject
//! duplicate ids, so the resulting example order is deterministic.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawPair {
    id: String,
    source: String,
    summary: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDoc {
    id: String,
    text: String,
    label: String,
}

/// Tokenized (source, summary) pair for teacher training.
#[derive(Debug, Clone)]
pub struct ArticlePair {
    pub id: String,
    pub source: Vec<String>,
    pub summary: Vec<String>,
}

/// Tokenized labeled document for classification.
#[derive(Debug, Clone)]
pub struct LabeledDoc {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: String,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidArg(format!("duplicate example id: {id}")));
        }
    }
    Ok(())
}

/// Load a summarization corpus of {"id","source","summary"} lines.
pub fn load_pairs(path: &Path, max_source: usize, max_summary: usize) -> Result<Vec<ArticlePair>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPair = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: i + 1, msg: format!("{e}") })?;
        let mut source = tokenize(&raw.source);
        let mut summary = tokenize(&raw.summary);
        source.truncate(max_source);
        summary.truncate(max_summary);
        if source.is_empty() || summary.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("example {}: source and summary must tokenize to at least one token", raw.id),
            });
        }
        out.push(ArticlePair { id: raw.id, source, summary });
    }
    check_unique_ids(out.iter().map(|p| p.id.as_str()))?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Load a classification corpus of {"id","text","label"} lines.
pub fn load_docs(path: &Path, max_len: usize) -> Result<Vec<LabeledDoc>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDoc = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: i + 1, msg: format!("{e}") })?;
        let mut tokens = tokenize(&raw.text);
        tokens.truncate(max_len);
        if tokens.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("example {}: text must tokenize to at least one token", raw.id),
            });
        }
        out.push(LabeledDoc { id: raw.id, tokens, label: raw.label });
    }
    check_unique_ids(out.iter().map(|d| d.id.as_str()))?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Serialize pairs back to JSONL (used by the synthetic generator).
pub fn write_pairs(path: &Path, pairs: &[(String, String, String)]) -> Result<()> {
    let mut out = String::new();
    for (id, source, summary) in pairs {
        let raw = RawPair { id: id.clone(), source: source.clone(), summary: summary.clone() };
        out.push_str(&serde_json::to_string(&raw)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_docs(path: &Path, docs: &[(String, String, String)]) -> Result<()> {
    let mut out = String::new();
    for (id, text, label) in docs {
        let raw = RawDoc { id: id.clone(), text: text.clone(), label: label.clone() };
        out.push_str(&serde_json::to_string(&raw)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
