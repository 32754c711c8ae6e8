//! Counterfactual training data: ratio-controlled augmentation sets,
//! contrastive positive/negative mapping, and the entity-filtering baseline.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{EntityRecognizer, LikelihoodScorer, RecognizedEntity, Tokenizer};
use crate::construction::{build_eval_set, derive_seed, rank_and_group, BuildOptions, SkipRecord, Toolkit};
use crate::error::{Error, Result};
use crate::model::{
    CandidatePool, CounterfactualSample, Dataset, EntityMention, Group, GroupSpec, Sample, Scenario,
    ValidationConfig,
};
use crate::pool::eligible_candidates;
use crate::replacement::{replace_in_text, ReplacementOptions};
use crate::text::contains_standalone;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// ρ: augmentation size relative to the training set.
    pub ratio: f64,
    pub group: Group,
    pub scenario: Scenario,
    /// The τ found for the matching evaluation set.
    pub threshold: f64,
    #[serde(default = "one")]
    pub negatives_per_sample: usize,
    /// Seed of the subset draw.
    pub seed: u64,
    /// Seed of the counterfactual construction itself. Kept apart from
    /// `seed` so that varying the sampling seed draws different subsets of
    /// one constructed set.
    #[serde(default)]
    pub construction_seed: u64,
}

fn one() -> usize {
    1
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "augmentation ratio {} outside (0, 1]",
                self.ratio
            )));
        }
        if self.negatives_per_sample == 0 {
            return Err(Error::InvalidConfig(
                "negatives_per_sample must be at least 1".into(),
            ));
        }
        ValidationConfig::new(self.scenario, self.threshold).map(|_| ())
    }

    pub fn build_options(&self) -> Result<BuildOptions> {
        self.validate()?;
        Ok(BuildOptions::new(
            ValidationConfig::new(self.scenario, self.threshold)?,
            GroupSpec::new(self.group),
            self.construction_seed,
        ))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationOutput {
    pub samples: Vec<CounterfactualSample>,
    /// Counterfactuals constructed before subsampling.
    pub available: usize,
    pub target: usize,
    pub skipped: Vec<SkipRecord>,
}

/// `round(ratio * train_len)`.
pub fn augmentation_target(ratio: f64, train_len: usize) -> usize {
    (ratio * train_len as f64).round() as usize
}

/// Draws `round(ratio * train_len)` of `available` uniformly without
/// replacement, keeping their original order. Returns everything, with a
/// warning, when fewer are available.
pub fn sample_augmentation(
    available: &[CounterfactualSample],
    train_len: usize,
    ratio: f64,
    seed: u64,
) -> Vec<CounterfactualSample> {
    let target = augmentation_target(ratio, train_len);
    if available.len() <= target {
        if available.len() < target {
            log::warn!(
                "only {} counterfactuals available for an augmentation target of {target}",
                available.len()
            );
        }
        return available.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "augmentation"));
    let mut picked = rand::seq::index::sample(&mut rng, available.len(), target).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| available[i].clone()).collect()
}

/// Constructs counterfactuals on the training split with the evaluation τ,
/// then subsamples them to the configured ratio.
pub fn build_augmentation_set(
    train: &Dataset,
    pool: &CandidatePool,
    tools: &Toolkit<'_>,
    config: &AugmentationConfig,
    workers: usize,
) -> Result<AugmentationOutput> {
    let options = BuildOptions {
        workers,
        ..config.build_options()?
    };
    let built = build_eval_set(train, pool, tools, &options)?;
    let samples = sample_augmentation(&built.samples, train.len(), config.ratio, config.seed);
    Ok(AugmentationOutput {
        available: built.samples.len(),
        target: augmentation_target(config.ratio, train.len()),
        samples,
        skipped: built.skipped,
    })
}

// =============================================================================
// Contrastive records
// =============================================================================

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub original_entity: String,
    pub counterfactual_entities: Vec<String>,
}

/// A document with summaries to pull towards (`positives`) and push away
/// from (`negatives`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveRecord {
    pub id: String,
    pub document: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ContrastiveRecord {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::MissingField {
                field: "positives".into(),
                line: None,
            });
        }
        if self.negatives.is_empty() {
            return Err(Error::MissingField {
                field: "negatives".into(),
                line: None,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextError {
    pub record_id: String,
    /// `document`, `positives[i]` or `negatives[i]`.
    pub field: String,
    pub message: String,
}

/// Applies the `(original, counterfactual)` replacement to the document and
/// every summary. Texts without the original entity pass through unchanged;
/// texts whose replacement fails are kept as they were and reported.
pub fn map_contrastive_pairs(
    record: &ContrastiveRecord,
    original: &str,
    counterfactual: &str,
    options: &ReplacementOptions,
) -> Result<(ContrastiveRecord, Vec<TextError>)> {
    if !contains_standalone(&record.document, original) {
        return Err(Error::EntityNotFound {
            surface: original.to_string(),
            field: "document".into(),
        });
    }
    let mut errors = Vec::new();
    let mut map = |field: String, text: &str| match replace_in_text(text, original, counterfactual, options) {
        Ok(t) => t,
        Err(e) => {
            errors.push(TextError {
                record_id: record.id.clone(),
                field,
                message: e.to_string(),
            });
            text.to_string()
        }
    };
    let document = map("document".into(), &record.document);
    let positives = record
        .positives
        .iter()
        .enumerate()
        .map(|(i, t)| map(format!("positives[{i}]"), t))
        .collect();
    let negatives = record
        .negatives
        .iter()
        .enumerate()
        .map(|(i, t)| map(format!("negatives[{i}]"), t))
        .collect();
    let mapped = ContrastiveRecord {
        id: record.id.clone(),
        document,
        positives,
        negatives,
        provenance: Some(Provenance {
            source_id: record.id.clone(),
            original_entity: original.to_string(),
            counterfactual_entities: vec![counterfactual.to_string()],
        }),
    };
    Ok((mapped, errors))
}

/// Maps every record that has counterfactuals (joined on `source_id`), one
/// output record per counterfactual.
pub fn map_contrastive_set(
    records: &[ContrastiveRecord],
    cfs: &[CounterfactualSample],
    options: &ReplacementOptions,
) -> (Vec<ContrastiveRecord>, Vec<TextError>) {
    let mut by_source: HashMap<&str, Vec<&CounterfactualSample>> = HashMap::new();
    for cf in cfs {
        by_source.entry(cf.source_id.as_str()).or_default().push(cf);
    }
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for r in records {
        for cf in by_source.get(r.id.as_str()).into_iter().flatten() {
            match map_contrastive_pairs(
                r,
                &cf.original_entity.surface,
                &cf.counterfactual_surface,
                options,
            ) {
                Ok((mapped, errs)) => {
                    out.push(mapped);
                    errors.extend(errs);
                }
                Err(e) => errors.push(TextError {
                    record_id: r.id.clone(),
                    field: "document".into(),
                    message: e.to_string(),
                }),
            }
        }
    }
    (out, errors)
}

/// Up to `k` distinct summaries, each `summary` with the mention replaced by
/// a different candidate from the requested group. Surfaces in `exclude` are
/// never used.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_negatives<R: rand::Rng + ?Sized>(
    summary: &str,
    mention: &EntityMention,
    pool: &CandidatePool,
    spec: &GroupSpec,
    scorer: &dyn LikelihoodScorer,
    document: &str,
    k: usize,
    exclude: &[&str],
    rng: &mut R,
    tokenizer: &dyn Tokenizer,
    options: &ReplacementOptions,
) -> Result<Vec<String>> {
    let candidates: Vec<_> = eligible_candidates(pool, &mention.category, &mention.surface)?
        .into_iter()
        .filter(|c| !exclude.contains(&c.surface.as_str()))
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyGroup(spec.group.to_string()));
    }
    let tokens = tokenizer.tokenize(summary);
    let prefix = tokens.get(..mention.first_token_pos).ok_or(Error::PositionMismatch {
        position: mention.first_token_pos,
        len: tokens.len(),
    })?;
    let drawn = rank_and_group(&candidates, scorer, tokenizer, document, prefix, spec, rng, k)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for e_c in drawn {
        match replace_in_text(summary, &mention.surface, &e_c, options) {
            Ok(t) if t != summary && seen.insert(t.clone()) => out.push(t),
            Ok(_) => {}
            Err(e) => log::warn!("negative with `{e_c}` skipped: {e}"),
        }
    }
    if out.len() < k {
        log::warn!("synthesized {} of {k} requested negatives", out.len());
    }
    Ok(out)
}

/// Contrastive records for an augmentation set: the counterfactual document,
/// its summary as the positive, and synthesized negatives that swap in other
/// same-group entities.
pub fn contrastive_from_counterfactuals(
    originals: &Dataset,
    cfs: &[CounterfactualSample],
    pool: &CandidatePool,
    tools: &Toolkit<'_>,
    config: &AugmentationConfig,
) -> (Vec<ContrastiveRecord>, Vec<TextError>) {
    let index: HashMap<&str, &Sample> =
        originals.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let spec = GroupSpec::new(config.group);
    let results: Vec<std::result::Result<ContrastiveRecord, TextError>> = cfs
        .par_iter()
        .enumerate()
        .map(|(i, cf)| {
            let fail = |message: String| TextError {
                record_id: cf.source_id.clone(),
                field: "negatives".into(),
                message,
            };
            let original = index
                .get(cf.source_id.as_str())
                .ok_or_else(|| fail(format!("no original sample `{}`", cf.source_id)))?;
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("{}#{i}", cf.source_id)));
            let negatives = synthesize_negatives(
                &original.summary,
                &cf.original_entity,
                pool,
                &spec,
                tools.scorer,
                &original.document,
                config.negatives_per_sample,
                &[cf.counterfactual_surface.as_str()],
                &mut rng,
                tools.tokenizer,
                &ReplacementOptions::default(),
            )
            .map_err(|e| fail(e.to_string()))?;
            if negatives.is_empty() {
                return Err(fail("no negative could be synthesized".into()));
            }
            Ok(ContrastiveRecord {
                id: format!("{}#{i}", cf.source_id),
                document: cf.counterfactual_document.clone(),
                positives: vec![cf.counterfactual_summary.clone()],
                negatives,
                provenance: Some(Provenance {
                    source_id: cf.source_id.clone(),
                    original_entity: cf.original_entity.surface.clone(),
                    counterfactual_entities: vec![cf.counterfactual_surface.clone()],
                }),
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push(e),
        }
    }
    (records, errors)
}

// =============================================================================
// Filtering baseline
// =============================================================================

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSample {
    pub sample: Sample,
    pub offending_entities: Vec<RecognizedEntity>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<Sample>,
    pub dropped: Vec<DroppedSample>,
}

/// Summary entities outside `excluded_categories` whose surface never occurs
/// on word boundaries in the document.
pub fn unsupported_entities(
    sample: &Sample,
    ner: &dyn EntityRecognizer,
    excluded_categories: &BTreeSet<String>,
) -> Vec<RecognizedEntity> {
    ner.extract(&sample.summary)
        .into_iter()
        .filter(|e| {
            !excluded_categories.contains(&e.category)
                && !contains_standalone(&sample.document, &e.surface)
        })
        .collect()
}

/// Drops samples whose summary mentions a non-excluded entity absent from
/// the document.
pub fn filter_dataset(
    dataset: &Dataset,
    ner: &dyn EntityRecognizer,
    excluded_categories: &BTreeSet<String>,
) -> FilterOutcome {
    let verdicts: Vec<Vec<RecognizedEntity>> = dataset
        .samples
        .par_iter()
        .map(|s| unsupported_entities(s, ner, excluded_categories))
        .collect();
    let mut out = FilterOutcome::default();
    for (sample, offending) in dataset.samples.iter().zip(verdicts) {
        if offending.is_empty() {
            out.kept.push(sample.clone());
        } else {
            out.dropped.push(DroppedSample {
                sample: sample.clone(),
                offending_entities: offending,
            });
        }
    }
    out
}
