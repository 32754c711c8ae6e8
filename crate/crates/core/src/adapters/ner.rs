use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{EntityRecognizer, RecognizedEntity};
use crate::error::{Error, Result};
use crate::model::Span;

/// Pattern file layout: category → regex list, and category → literal
/// surfaces matched on word boundaries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NerConfig {
    #[serde(default)]
    pub patterns: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub gazetteer: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
enum Matcher {
    Pattern(Regex),
    /// Literal surface, matched on word boundaries.
    Literal(String),
}

#[derive(Debug, Clone)]
struct Rule {
    category: String,
    matcher: Matcher,
}

/// Regex/gazetteer recognizer. Matches from all rules are resolved
/// leftmost-longest into a non-overlapping list; equal spans go to the
/// earlier rule.
#[derive(Debug, Clone, Default)]
pub struct RegexNer {
    rules: Vec<Rule>,
}

impl RegexNer {
    pub fn from_patterns(patterns: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut ner = RegexNer::default();
        for (category, list) in patterns {
            for p in list {
                let regex = Regex::new(p).map_err(|e| Error::BadPattern {
                    category: category.clone(),
                    message: e.to_string(),
                })?;
                ner.rules.push(Rule {
                    category: category.clone(),
                    matcher: Matcher::Pattern(regex),
                });
            }
        }
        Ok(ner)
    }

    pub fn from_gazetteer(gazetteer: &BTreeMap<String, Vec<String>>) -> Self {
        let mut ner = RegexNer::default();
        ner.add_gazetteer(gazetteer);
        ner
    }

    pub fn from_config(config: &NerConfig) -> Result<Self> {
        let mut ner = Self::from_patterns(&config.patterns)?;
        ner.add_gazetteer(&config.gazetteer);
        Ok(ner)
    }

    fn add_gazetteer(&mut self, gazetteer: &BTreeMap<String, Vec<String>>) {
        for (category, surfaces) in gazetteer {
            for s in surfaces.iter().filter(|s| !s.is_empty()) {
                self.rules.push(Rule {
                    category: category.clone(),
                    matcher: Matcher::Literal(s.clone()),
                });
            }
        }
    }
}

impl EntityRecognizer for RegexNer {
    fn extract(&self, text: &str) -> Vec<RecognizedEntity> {
        let mut hits: Vec<(Span, usize)> = Vec::new();
        for (i, rule) in self.rules.iter().enumerate() {
            match &rule.matcher {
                Matcher::Literal(surface) => hits.extend(
                    crate::text::find_standalone(text, surface)
                        .into_iter()
                        .map(|s| (s, i)),
                ),
                Matcher::Pattern(regex) => hits.extend(
                    regex
                        .find_iter(text)
                        .filter(|m| m.start() < m.end())
                        .map(|m| (Span::new(m.start(), m.end()), i)),
                ),
            }
        }
        hits.sort_by(|(a, ia), (b, ib)| {
            a.start
                .cmp(&b.start)
                .then(b.len().cmp(&a.len()))
                .then(ia.cmp(ib))
        });
        let mut out: Vec<RecognizedEntity> = Vec::new();
        let mut frontier = 0;
        for (span, i) in hits {
            if span.start < frontier {
                continue;
            }
            frontier = span.end;
            out.push(RecognizedEntity {
                surface: text[span.start..span.end].to_string(),
                category: self.rules[i].category.clone(),
                span,
            });
        }
        out
    }
}
