//! Entity-level and proportional word-level replacement.
//!
//! Replacement runs in two passes over a text:
//!
//! 1. every standalone occurrence of the full original surface becomes the
//!    counterfactual surface;
//! 2. every remaining standalone occurrence of an original word is swapped
//!    for its proportional counterpart from [`word_map`]. Spans written in
//!    pass 1 are not touched, and words shorter than
//!    [`ReplacementOptions::min_word_len`] characters are left alone.
//!
//! Pairs that would leave the original surface recoverable, or make a second
//! application change the text again, fail with `DegenerateReplacement`.

use serde::{Deserialize, Serialize};

use crate::adapters::Tokenizer;
use crate::error::{Error, Result};
use crate::model::{EntityMention, Sample};
use crate::text::{contains_standalone, find_standalone, replace_standalone, replace_words_simultaneously};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementOptions {
    pub min_word_len: usize,
}

impl Default for ReplacementOptions {
    fn default() -> Self {
        ReplacementOptions { min_word_len: 2 }
    }
}

/// Pairs word `i` of `original` (of `m` words) with word `floor(i * n / m)`
/// of `counterfactual` (of `n` words), dropping identical pairs.
pub fn word_map(original: &str, counterfactual: &str) -> Result<Vec<(String, String)>> {
    let src: Vec<&str> = original.split_whitespace().collect();
    let dst: Vec<&str> = counterfactual.split_whitespace().collect();
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyEntity);
    }
    let (m, n) = (src.len(), dst.len());
    Ok(src
        .iter()
        .enumerate()
        .map(|(i, w)| (*w, dst[i * n / m]))
        .filter(|(w, v)| w != v)
        .map(|(w, v)| (w.to_string(), v.to_string()))
        .collect())
}

/// The subset of [`word_map`] that pass 2 actually applies.
fn active_word_map(
    original: &str,
    counterfactual: &str,
    options: &ReplacementOptions,
) -> Result<Vec<(String, String)>> {
    let mut active: Vec<(String, String)> = Vec::new();
    for (w, v) in word_map(original, counterfactual)? {
        if w.chars().count() >= options.min_word_len && !active.iter().any(|(a, _)| *a == w) {
            active.push((w, v));
        }
    }
    Ok(active)
}

fn degenerate(original: &str, counterfactual: &str) -> Error {
    Error::DegenerateReplacement {
        original: original.to_string(),
        counterfactual: counterfactual.to_string(),
    }
}

/// A prepared `(E_o, E_c)` replacement.
#[derive(Debug, Clone)]
pub struct Replacer {
    original: String,
    counterfactual: String,
    words: Vec<(String, String)>,
}

impl Replacer {
    pub fn new(original: &str, counterfactual: &str, options: &ReplacementOptions) -> Result<Self> {
        if original.trim().is_empty() || counterfactual.trim().is_empty() {
            return Err(Error::EmptyEntity);
        }
        if counterfactual.contains(original) {
            return Err(degenerate(original, counterfactual));
        }
        let words = active_word_map(original, counterfactual, options)?;
        // a source word inside E_c would be rewritten on a second pass
        if words.iter().any(|(w, _)| contains_standalone(counterfactual, w)) {
            return Err(degenerate(original, counterfactual));
        }
        Ok(Replacer {
            original: original.to_string(),
            counterfactual: counterfactual.to_string(),
            words,
        })
    }

    pub fn original(&self) -> &str {
        &self.original
    }

    pub fn counterfactual(&self) -> &str {
        &self.counterfactual
    }

    /// Runs both passes. Fails if the result still contains the original
    /// surface on word boundaries.
    pub fn apply(&self, text: &str) -> Result<String> {
        let (entity_replaced, inserted) =
            replace_standalone(text, &self.original, &self.counterfactual);
        let out = replace_words_simultaneously(&entity_replaced, &self.words, &inserted);
        if contains_standalone(&out, &self.original) {
            return Err(degenerate(&self.original, &self.counterfactual));
        }
        Ok(out)
    }
}

/// Replaces `original` in a single text; texts without a standalone
/// occurrence of `original` come back unchanged.
pub fn replace_in_text(
    text: &str,
    original: &str,
    counterfactual: &str,
    options: &ReplacementOptions,
) -> Result<String> {
    if !contains_standalone(text, original) {
        return Ok(text.to_string());
    }
    Replacer::new(original, counterfactual, options)?.apply(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replaced {
    pub document: String,
    pub summary: String,
    /// Token index of the earliest counterfactual occurrence in `summary`.
    pub first_token_pos: usize,
}

pub fn apply_replacement(
    sample: &Sample,
    entity: &EntityMention,
    counterfactual_surface: &str,
    tokenizer: &dyn Tokenizer,
    options: &ReplacementOptions,
) -> Result<Replaced> {
    for (field, text) in [("document", &sample.document), ("summary", &sample.summary)] {
        if !contains_standalone(text, &entity.surface) {
            return Err(Error::EntityNotFound {
                surface: entity.surface.clone(),
                field: field.into(),
            });
        }
    }
    if counterfactual_surface == entity.surface {
        return Err(degenerate(&entity.surface, counterfactual_surface));
    }
    let replacer = Replacer::new(&entity.surface, counterfactual_surface, options)?;
    let document = replacer.apply(&sample.document)?;
    let summary = replacer.apply(&sample.summary)?;
    let first_token_pos = locate_first_token(&summary, counterfactual_surface, tokenizer)?;
    Ok(Replaced {
        document,
        summary,
        first_token_pos,
    })
}

/// Token index where the earliest standalone occurrence of `surface` begins.
pub fn locate_first_token(summary: &str, surface: &str, tokenizer: &dyn Tokenizer) -> Result<usize> {
    let first = find_standalone(summary, surface)
        .into_iter()
        .next()
        .ok_or_else(|| Error::EntityNotFound {
            surface: surface.to_string(),
            field: "summary".into(),
        })?;
    Ok(tokenizer.char_to_token(summary, first.start))
}
