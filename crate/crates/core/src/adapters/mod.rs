//! Model- and tool-shaped interfaces, plus deterministic doubles for offline runs.
//!
//! The pretrained validator and the fine-tuned model under evaluation share
//! [`LikelihoodScorer`]; they differ only by id.

mod doubles;
mod ner;
#[cfg(feature = "remote")]
mod remote;
mod table;
mod tokenize;

pub use doubles::{
    lexical_consistency, FirstSentenceGenerator, FixedGenerator, LexicalConsistency,
    PrecomputedGenerator,
};
pub use ner::{NerConfig, RegexNer};
#[cfg(feature = "remote")]
pub use remote::{RemoteScorer, RemoteScorerConfig, ScoreRequest, ScoreResponse};
pub use table::{
    table_scorer_from_config, HashScorer, TableEntry, TableScorer, TableScorerConfig, WILDCARD,
};
pub use tokenize::{WhitespaceTokenizer, WordPunctTokenizer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Span;

/// `P(candidate | document, prefix)` for the first token of a continuation.
///
/// Implementations must be deterministic and return values in `[0, 1]`.
/// Scorers that cannot serve concurrent calls report `false` from
/// [`is_concurrent`](LikelihoodScorer::is_concurrent) and the pipeline
/// serializes them.
pub trait LikelihoodScorer: Send + Sync {
    fn id(&self) -> &str;

    fn first_token_likelihood(
        &self,
        document: &str,
        prefix: &[String],
        candidate_token: &str,
    ) -> Result<f64>;

    fn is_concurrent(&self) -> bool {
        true
    }
}

pub trait SummaryGenerator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, document: &str) -> Result<String>;
}

pub trait ConsistencyScorer: Send + Sync {
    fn id(&self) -> &str;
    fn score(&self, document: &str, summary: &str) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognizedEntity {
    pub surface: String,
    pub category: String,
    pub span: Span,
}

/// Named-entity recognizer. Spans are in bounds and pairwise disjoint.
pub trait EntityRecognizer: Send + Sync {
    fn extract(&self, text: &str) -> Vec<RecognizedEntity>;
}

pub trait Tokenizer: Send + Sync {
    /// Byte spans of the tokens, in order.
    fn token_spans(&self, text: &str) -> Vec<Span>;

    fn tokenize(&self, text: &str) -> Vec<String> {
        self.token_spans(text)
            .into_iter()
            .map(|s| text[s.start..s.end].to_string())
            .collect()
    }

    /// Index of the token containing byte `char_index`, or of the next token
    /// when the byte falls between tokens. Monotone in `char_index`.
    fn char_to_token(&self, text: &str, char_index: usize) -> usize {
        self.token_spans(text)
            .iter()
            .position(|s| s.end > char_index)
            .unwrap_or_else(|| self.token_spans(text).len())
    }

    /// First token of `text`, falling back to the trimmed text itself.
    fn first_token(&self, text: &str) -> String {
        self.token_spans(text)
            .first()
            .map(|s| text[s.start..s.end].to_string())
            .unwrap_or_else(|| text.trim().to_string())
    }
}

pub(crate) fn check_probability(p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Worker count to use with `scorer`; non-concurrent scorers get one.
pub fn effective_workers(scorer: &dyn LikelihoodScorer, requested: usize) -> usize {
    if scorer.is_concurrent() {
        requested.max(1)
    } else {
        1
    }
}
