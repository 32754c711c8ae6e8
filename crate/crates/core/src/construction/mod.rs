//! Evaluation-set construction.
//!
//! For every sample: extract the original entities present in both document
//! and summary, draw a counterfactual from the requested likelihood group,
//! validate, and swap. Scenario S1 (and its masked variant) validates the
//! original entity against the model's parametric knowledge before looking at
//! the counterfactual; S2 builds the pair first and validates the likelihood
//! drop.
//!
//! Scoring is split from thresholding: [`score_dataset`] runs every scorer
//! call and RNG draw (none of which depend on τ), and
//! [`ScoredDataset::materialize`] applies a threshold. Threshold search
//! therefore sees exactly the selection `build_eval_set` would make.

mod grouping;
mod threshold;
mod validation;

pub use grouping::{partition, rank_and_group, rank_candidates, RankedCandidate};
pub use threshold::{search_grid, search_threshold, threshold_grid, ThresholdResult, ThresholdSearch};
pub use validation::{
    extract_original_candidates, masked_context, masked_summary, validate_s1, validate_s1_masked,
    validate_s2, PairVerdict, Verdict,
};

pub(crate) use validation::pair_likelihoods;

use std::collections::{BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::{effective_workers, EntityRecognizer, LikelihoodScorer, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{
    CandidatePool, CounterfactualSample, Dataset, EntityMention, GroupSpec, Sample, Scenario, Span,
    ValidationConfig,
};
use crate::pool::{default_excluded_categories, eligible_candidates};
use crate::replacement::{apply_replacement, Replaced, ReplacementOptions};

/// The model- and tool-shaped collaborators of a construction run.
#[derive(Clone, Copy)]
pub struct Toolkit<'a> {
    pub scorer: &'a dyn LikelihoodScorer,
    pub tokenizer: &'a dyn Tokenizer,
    pub ner: &'a dyn EntityRecognizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub validation: ValidationConfig,
    pub groups: GroupSpec,
    pub run_seed: u64,
    /// Counterfactuals drawn per original entity.
    #[serde(default = "one")]
    pub fan_out: usize,
    /// Cap on emitted counterfactuals per source sample.
    #[serde(default)]
    pub max_per_sample: Option<usize>,
    #[serde(default = "default_excluded")]
    pub excluded_categories: BTreeSet<String>,
    #[serde(default)]
    pub replacement: ReplacementOptions,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

fn default_excluded() -> BTreeSet<String> {
    default_excluded_categories().into_iter().collect()
}

impl BuildOptions {
    pub fn new(validation: ValidationConfig, groups: GroupSpec, run_seed: u64) -> Self {
        BuildOptions {
            validation,
            groups,
            run_seed,
            fan_out: 1,
            max_per_sample: None,
            excluded_categories: default_excluded(),
            replacement: ReplacementOptions::default(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validation.validate()?;
        self.groups.boundaries.validate()?;
        if self.fan_out == 0 {
            return Err(Error::InvalidConfig("fan_out must be at least 1".into()));
        }
        if self.max_per_sample == Some(0) {
            return Err(Error::InvalidConfig("max_per_sample must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-sample RNG seed: the first eight bytes (little endian) of
/// `SHA-256(run_seed as 8 LE bytes || sample id)`.
pub fn derive_seed(run_seed: u64, sample_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

// =============================================================================
// Skip log
// =============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extraction,
    Grouping,
    Validation,
    Replacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    NoEntity,
    EmptyGroup,
    BelowThreshold,
    ReplacementError,
    /// The likelihood scorer failed or returned an invalid value.
    ScorerError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub sample_id: String,
    pub stage: Stage,
    pub code: ReasonCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SkipRecord {
    fn new(sample_id: &str, stage: Stage, code: ReasonCode) -> Self {
        SkipRecord {
            sample_id: sample_id.to_string(),
            stage,
            code,
            entity: None,
            counterfactual: None,
            score: None,
            message: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildOutput {
    pub samples: Vec<CounterfactualSample>,
    pub skipped: Vec<SkipRecord>,
}

// =============================================================================
// Scoring
// =============================================================================

#[derive(Debug, Clone)]
enum Outcome {
    Skipped(SkipRecord),
    Trial(Trial),
}

#[derive(Debug, Clone)]
struct Trial {
    mention: EntityMention,
    counterfactual: String,
    /// `None` only when S2 replacement failed before scoring.
    score: Option<f64>,
    replaced: std::result::Result<Replaced, String>,
}

#[derive(Debug, Clone)]
struct SampleTrials {
    id: String,
    seed: u64,
    outcomes: Vec<Outcome>,
}

/// Every τ-independent decision of a construction run.
#[derive(Debug, Clone)]
pub struct ScoredDataset {
    scenario: Scenario,
    spec: GroupSpec,
    max_per_sample: Option<usize>,
    samples: Vec<SampleTrials>,
}

impl ScoredDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// Applies `threshold` (strict `>`), emitting in dataset order.
    pub fn materialize(&self, threshold: f64) -> BuildOutput {
        let mut out = BuildOutput::default();
        for s in &self.samples {
            let mut emitted = 0;
            for outcome in &s.outcomes {
                if self.max_per_sample.is_some_and(|cap| emitted >= cap) {
                    break;
                }
                let trial = match outcome {
                    Outcome::Skipped(rec) => {
                        out.skipped.push(rec.clone());
                        continue;
                    }
                    Outcome::Trial(t) => t,
                };
                match self.judge(s, trial, threshold) {
                    Ok(cf) => {
                        out.samples.push(cf);
                        emitted += 1;
                    }
                    Err(rec) => out.skipped.push(rec),
                }
            }
        }
        out
    }

    fn judge(
        &self,
        s: &SampleTrials,
        t: &Trial,
        threshold: f64,
    ) -> std::result::Result<CounterfactualSample, SkipRecord> {
        let skip = |stage, code, message: Option<String>| SkipRecord {
            entity: Some(t.mention.surface.clone()),
            counterfactual: Some(t.counterfactual.clone()),
            score: t.score,
            message,
            ..SkipRecord::new(&s.id, stage, code)
        };
        let below = |score: f64| score <= threshold;
        // S1 rejects on the score before the replacement is considered; S2
        // cannot score without a replacement.
        let replaced = match (self.scenario, t.score, &t.replaced) {
            (Scenario::S2, _, Err(e)) => {
                return Err(skip(Stage::Replacement, ReasonCode::ReplacementError, Some(e.clone())))
            }
            (_, Some(score), _) if below(score) => {
                return Err(skip(Stage::Validation, ReasonCode::BelowThreshold, None))
            }
            (_, _, Err(e)) => {
                return Err(skip(Stage::Replacement, ReasonCode::ReplacementError, Some(e.clone())))
            }
            (_, _, Ok(r)) => r,
        };
        let cf = CounterfactualSample {
            source_id: s.id.clone(),
            counterfactual_document: replaced.document.clone(),
            counterfactual_summary: replaced.summary.clone(),
            original_entity: t.mention.clone(),
            counterfactual_surface: t.counterfactual.clone(),
            counterfactual_first_token_pos: replaced.first_token_pos,
            group: self.spec.group,
            scenario: self.scenario,
            validation_score: t.score.unwrap_or(f64::NAN),
            rng_seed: s.seed,
        };
        match cf.check_invariants() {
            Ok(()) => Ok(cf),
            Err(e) => Err(skip(Stage::Replacement, ReasonCode::ReplacementError, Some(e.to_string()))),
        }
    }
}

fn scorer_skip(id: &str, stage: Stage, mention: &EntityMention, e: &Error) -> Outcome {
    Outcome::Skipped(SkipRecord {
        entity: Some(mention.surface.clone()),
        message: Some(e.to_string()),
        ..SkipRecord::new(id, stage, ReasonCode::ScorerError)
    })
}

fn score_sample(
    sample: &Sample,
    pool: &CandidatePool,
    tools: &Toolkit<'_>,
    options: &BuildOptions,
    excluded: &HashSet<String>,
) -> SampleTrials {
    let seed = derive_seed(options.run_seed, &sample.id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcomes = Vec::new();
    let mentions = extract_original_candidates(sample, tools.ner, excluded, tools.tokenizer);
    if mentions.is_empty() {
        outcomes.push(Outcome::Skipped(SkipRecord::new(
            &sample.id,
            Stage::Extraction,
            ReasonCode::NoEntity,
        )));
    }
    let summary_tokens = tools.tokenizer.tokenize(&sample.summary);
    let entity_spans: Vec<Span> = match options.validation.scenario {
        Scenario::S1Masked => tools.ner.extract(&sample.summary).into_iter().map(|e| e.span).collect(),
        _ => Vec::new(),
    };

    for mention in &mentions {
        let Some(prefix) = summary_tokens.get(..mention.first_token_pos) else {
            let e = Error::PositionMismatch {
                position: mention.first_token_pos,
                len: summary_tokens.len(),
            };
            outcomes.push(scorer_skip(&sample.id, Stage::Grouping, mention, &e));
            continue;
        };
        let drawn = eligible_candidates(pool, &mention.category, &mention.surface).and_then(|c| {
            rank_and_group(
                &c,
                tools.scorer,
                tools.tokenizer,
                &sample.document,
                prefix,
                &options.groups,
                &mut rng,
                options.fan_out,
            )
        });
        let drawn = match drawn {
            Ok(d) => d,
            Err(e @ (Error::EmptyGroup(_) | Error::UnknownCategory(_))) => {
                outcomes.push(Outcome::Skipped(SkipRecord {
                    entity: Some(mention.surface.clone()),
                    message: Some(e.to_string()),
                    ..SkipRecord::new(&sample.id, Stage::Grouping, ReasonCode::EmptyGroup)
                }));
                continue;
            }
            Err(e) => {
                outcomes.push(scorer_skip(&sample.id, Stage::Grouping, mention, &e));
                continue;
            }
        };

        // S1 scores depend only on the original entity.
        let s1_score = match options.validation.scenario {
            Scenario::S1 => Some(validate_s1(
                mention,
                &summary_tokens,
                tools.scorer,
                tools.tokenizer,
                &options.validation,
            )),
            Scenario::S1Masked => Some(validate_s1_masked(
                mention,
                &sample.summary,
                &entity_spans,
                &summary_tokens,
                tools.scorer,
                tools.tokenizer,
                &options.validation,
            )),
            Scenario::S2 => None,
        };
        if let Some(Err(e)) = &s1_score {
            outcomes.push(scorer_skip(&sample.id, Stage::Validation, mention, e));
            continue;
        }

        for cf in drawn {
            let trial = match &s1_score {
                Some(v) => {
                    let score = v.as_ref().map(|v| v.score).ok();
                    let replaced = apply_replacement(
                        sample,
                        mention,
                        &cf,
                        tools.tokenizer,
                        &options.replacement,
                    )
                    .map_err(|e| e.to_string());
                    Trial {
                        mention: mention.clone(),
                        counterfactual: cf,
                        score,
                        replaced,
                    }
                }
                None => match validate_s2(
                    sample,
                    mention,
                    &cf,
                    tools.scorer,
                    &options.validation,
                    tools.tokenizer,
                    &options.replacement,
                ) {
                    Ok(pv) => Trial {
                        mention: mention.clone(),
                        counterfactual: cf,
                        score: Some(pv.verdict.score),
                        replaced: Ok(pv.replaced),
                    },
                    Err(
                        e @ (Error::DegenerateReplacement { .. }
                        | Error::EntityNotFound { .. }
                        | Error::EmptyEntity),
                    ) => Trial {
                        mention: mention.clone(),
                        counterfactual: cf,
                        score: None,
                        replaced: Err(e.to_string()),
                    },
                    Err(e) => {
                        outcomes.push(scorer_skip(&sample.id, Stage::Validation, mention, &e));
                        continue;
                    }
                },
            };
            outcomes.push(Outcome::Trial(trial));
        }
    }
    SampleTrials {
        id: sample.id.clone(),
        seed,
        outcomes,
    }
}

/// Runs `f` on a dedicated pool of `workers` threads. Parallel iterators
/// inside `f` keep their input order.
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
        .install(f))
}

/// Runs every scorer call and draw for `dataset`. Output order follows the
/// dataset regardless of the worker count.
pub fn score_dataset(
    dataset: &Dataset,
    pool: &CandidatePool,
    tools: &Toolkit<'_>,
    options: &BuildOptions,
) -> Result<ScoredDataset> {
    options.validate()?;
    if pool.is_empty() {
        return Err(Error::InvalidConfig("candidate pool is empty".into()));
    }
    let excluded: HashSet<String> = options.excluded_categories.iter().cloned().collect();
    let workers = effective_workers(tools.scorer, options.workers);
    let samples = with_workers(workers, || {
        dataset
            .samples
            .par_iter()
            .map(|s| score_sample(s, pool, tools, options, &excluded))
            .collect()
    })?;
    Ok(ScoredDataset {
        scenario: options.validation.scenario,
        spec: options.groups,
        max_per_sample: options.max_per_sample,
        samples,
    })
}

/// Builds the evaluation set at `options.validation.threshold`.
pub fn build_eval_set(
    dataset: &Dataset,
    pool: &CandidatePool,
    tools: &Toolkit<'_>,
    options: &BuildOptions,
) -> Result<BuildOutput> {
    let scored = score_dataset(dataset, pool, tools, options)?;
    let out = scored.materialize(options.validation.threshold);
    log::info!(
        "{}: emitted {} counterfactuals from {} samples ({} skip records)",
        options.validation.scenario,
        out.samples.len(),
        dataset.len(),
        out.skipped.len()
    );
    Ok(out)
}
