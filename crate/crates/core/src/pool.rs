//! Counterfactual entity candidate pool built from a training corpus.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::EntityRecognizer;
use crate::error::{Error, Result};
use crate::model::{sort_bucket, CandidatePool, PoolEntry, Sample};

/// spaCy's numerical labels. These paraphrase too easily to be swapped.
pub const NUMERIC_CATEGORIES: [&str; 7] = [
    "CARDINAL", "DATE", "MONEY", "ORDINAL", "PERCENT", "QUANTITY", "TIME",
];

pub fn default_excluded_categories() -> HashSet<String> {
    NUMERIC_CATEGORIES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolFields {
    Doc,
    Summary,
    #[default]
    Both,
}

impl FromStr for PoolFields {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doc" | "document" => Ok(PoolFields::Doc),
            "summary" => Ok(PoolFields::Summary),
            "both" => Ok(PoolFields::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown pool fields `{other}` (expected doc, summary or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolOptions {
    pub fields: PoolFields,
    pub min_frequency: u64,
}

impl Default for PoolOptions {
    fn default() -> Self {
        PoolOptions {
            fields: PoolFields::Both,
            min_frequency: 1,
        }
    }
}

type Counts = HashMap<(String, String), u64>;

fn count_sample(
    sample: &Sample,
    ner: &dyn EntityRecognizer,
    excluded: &HashSet<String>,
    fields: PoolFields,
) -> Counts {
    let mut counts = Counts::new();
    let texts: &[&str] = match fields {
        PoolFields::Doc => &[&sample.document],
        PoolFields::Summary => &[&sample.summary],
        PoolFields::Both => &[&sample.document, &sample.summary],
    };
    for text in texts {
        for e in ner.extract(text) {
            if excluded.contains(&e.category) {
                continue;
            }
            *counts.entry((e.category, e.surface)).or_default() += 1;
        }
    }
    counts
}

/// Counts every non-excluded mention in the corpus, one per occurrence.
pub fn build_pool(
    corpus: &[Sample],
    ner: &dyn EntityRecognizer,
    excluded_categories: &HashSet<String>,
    options: &PoolOptions,
) -> Result<CandidatePool> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts = corpus
        .par_iter()
        .map(|s| count_sample(s, ner, excluded_categories, options.fields))
        .reduce(Counts::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });

    let mut by_category: BTreeMap<String, Vec<PoolEntry>> = BTreeMap::new();
    for ((category, surface), frequency) in counts {
        if frequency >= options.min_frequency.max(1) {
            by_category
                .entry(category)
                .or_default()
                .push(PoolEntry { surface, frequency });
        }
    }
    for bucket in by_category.values_mut() {
        sort_bucket(bucket);
    }
    Ok(CandidatePool { by_category })
}

/// Same-category candidates with the original surface removed.
///
/// Fails with `UnknownCategory` when nothing is left.
pub fn eligible_candidates(
    pool: &CandidatePool,
    category: &str,
    exclude_surface: &str,
) -> Result<Vec<PoolEntry>> {
    let out: Vec<PoolEntry> = pool
        .bucket(category)
        .iter()
        .filter(|e| e.surface != exclude_surface)
        .cloned()
        .collect();
    if out.is_empty() {
        Err(Error::UnknownCategory(category.to_string()))
    } else {
        Ok(out)
    }
}
