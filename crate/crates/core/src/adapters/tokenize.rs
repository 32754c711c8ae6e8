use std::sync::LazyLock;

use regex::Regex;

use super::Tokenizer;
use crate::model::Span;

/// Tokens are maximal runs of non-whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn token_spans(&self, text: &str) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    spans.push(Span::new(s, i));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push(Span::new(s, text.len()));
        }
        spans
    }
}

static WORD_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+|[^\w\s]").unwrap());

/// Word runs and single punctuation marks are separate tokens, so
/// `Turkey's` yields `Turkey`, `'`, `s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordPunctTokenizer;

impl Tokenizer for WordPunctTokenizer {
    fn token_spans(&self, text: &str) -> Vec<Span> {
        WORD_PUNCT
            .find_iter(text)
            .map(|m| Span::new(m.start(), m.end()))
            .collect()
    }
}
