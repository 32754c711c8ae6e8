use std::collections::{HashMap, HashSet};

use super::{ConsistencyScorer, SummaryGenerator};
use crate::error::{Error, Result};

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

/// Percentage (0–100) of summary words that also occur in the document.
/// Summaries without words score 0.
pub fn lexical_consistency(document: &str, summary: &str) -> f64 {
    let vocab: HashSet<&str> = words(document).collect();
    let (mut hit, mut total) = (0usize, 0usize);
    for w in words(summary) {
        total += 1;
        if vocab.contains(w) {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        100.0 * hit as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalConsistency;

impl ConsistencyScorer for LexicalConsistency {
    fn id(&self) -> &str {
        "lexical"
    }

    fn score(&self, document: &str, summary: &str) -> Result<f64> {
        Ok(lexical_consistency(document, summary))
    }
}

/// Echoes the first sentence of the document.
#[derive(Debug, Clone, Copy, Default)]
pub struct FirstSentenceGenerator;

impl SummaryGenerator for FirstSentenceGenerator {
    fn id(&self) -> &str {
        "first-sentence"
    }

    fn generate(&self, document: &str) -> Result<String> {
        let trimmed = document.trim_start();
        let end = trimmed
            .char_indices()
            .find(|&(_, c)| matches!(c, '.' | '!' | '?'))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(trimmed.len());
        Ok(trimmed[..end].trim().to_string())
    }
}

/// Ignores its input and returns the same summary every time.
#[derive(Debug, Clone)]
pub struct FixedGenerator {
    pub summary: String,
}

impl SummaryGenerator for FixedGenerator {
    fn id(&self) -> &str {
        "fixed"
    }

    fn generate(&self, _document: &str) -> Result<String> {
        Ok(self.summary.clone())
    }
}

/// Serves summaries produced offline, keyed by the exact document text.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedGenerator {
    id: String,
    by_document: HashMap<String, String>,
}

impl PrecomputedGenerator {
    pub fn new(id: impl Into<String>) -> Self {
        PrecomputedGenerator {
            id: id.into(),
            by_document: HashMap::new(),
        }
    }

    pub fn insert(&mut self, document: impl Into<String>, summary: impl Into<String>) {
        self.by_document.insert(document.into(), summary.into());
    }

    pub fn len(&self) -> usize {
        self.by_document.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_document.is_empty()
    }
}

impl SummaryGenerator for PrecomputedGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, document: &str) -> Result<String> {
        self.by_document
            .get(document)
            .cloned()
            .ok_or_else(|| Error::GeneratorFailure {
                sample_id: String::new(),
                message: "no precomputed summary for document".into(),
            })
    }
}
