use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_probability, LikelihoodScorer};
use crate::error::Result;

/// Matches any document or prefix in a [`TableScorer`] entry.
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    #[serde(default = "wildcard")]
    pub document: String,
    /// Prefix tokens joined by single spaces.
    #[serde(default = "wildcard")]
    pub prefix: String,
    pub token: String,
    pub prob: f64,
}

fn wildcard() -> String {
    WILDCARD.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableScorerConfig {
    #[serde(default = "default_table_id")]
    pub id: String,
    #[serde(default = "default_prob")]
    pub default_prob: f64,
    #[serde(default)]
    pub entries: Vec<TableEntry>,
}

fn default_table_id() -> String {
    "table".into()
}

fn default_prob() -> f64 {
    0.5
}

/// Lookup-table scorer. Resolution order for a query is
/// `(doc, prefix, token)`, `(doc, *, token)`, `(*, prefix, token)`,
/// `(*, *, token)`, then `default_prob`.
#[derive(Debug, Clone)]
pub struct TableScorer {
    id: String,
    default_prob: f64,
    table: HashMap<(String, String, String), f64>,
}

impl TableScorer {
    pub fn new(id: impl Into<String>, default_prob: f64) -> Result<Self> {
        Ok(TableScorer {
            id: id.into(),
            default_prob: check_probability(default_prob)?,
            table: HashMap::new(),
        })
    }

    pub fn insert(
        &mut self,
        document: impl Into<String>,
        prefix: impl Into<String>,
        token: impl Into<String>,
        prob: f64,
    ) -> Result<()> {
        self.table.insert(
            (document.into(), prefix.into(), token.into()),
            check_probability(prob)?,
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    fn lookup(&self, document: &str, prefix: &str, token: &str) -> f64 {
        let key = |d: &str, p: &str| (d.to_string(), p.to_string(), token.to_string());
        [
            key(document, prefix),
            key(document, WILDCARD),
            key(WILDCARD, prefix),
            key(WILDCARD, WILDCARD),
        ]
        .iter()
        .find_map(|k| self.table.get(k).copied())
        .unwrap_or(self.default_prob)
    }
}

impl LikelihoodScorer for TableScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn first_token_likelihood(
        &self,
        document: &str,
        prefix: &[String],
        candidate_token: &str,
    ) -> Result<f64> {
        Ok(self.lookup(document, &prefix.join(" "), candidate_token))
    }
}

pub fn table_scorer_from_config(config: &TableScorerConfig) -> Result<TableScorer> {
    let mut scorer = TableScorer::new(config.id.clone(), config.default_prob)?;
    for e in &config.entries {
        scorer.insert(e.document.clone(), e.prefix.clone(), e.token.clone(), e.prob)?;
    }
    Ok(scorer)
}

/// Pseudo-random but fully deterministic scorer: the probability is derived
/// from a SHA-256 of the seed and the query.
#[derive(Debug, Clone)]
pub struct HashScorer {
    id: String,
    seed: u64,
}

impl HashScorer {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        HashScorer {
            id: id.into(),
            seed,
        }
    }
}

impl LikelihoodScorer for HashScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn first_token_likelihood(
        &self,
        document: &str,
        prefix: &[String],
        candidate_token: &str,
    ) -> Result<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(document.as_bytes());
        h.update([0x1f]);
        for tok in prefix {
            h.update(tok.as_bytes());
            h.update([0x1e]);
        }
        h.update([0x1f]);
        h.update(candidate_token.as_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        Ok((u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64)
    }
}
