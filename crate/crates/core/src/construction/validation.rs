//! Original-entity extraction and the entity validation scenarios.

use std::collections::HashSet;

use crate::adapters::{EntityRecognizer, LikelihoodScorer, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{EntityMention, Sample, Span, ValidationConfig};
use crate::replacement::{apply_replacement, Replaced, ReplacementOptions};
use crate::text::find_standalone;

/// Summary entities (non-excluded) whose surface also occurs in the document,
/// ordered by first appearance in the summary.
pub fn extract_original_candidates(
    sample: &Sample,
    ner: &dyn EntityRecognizer,
    excluded_categories: &HashSet<String>,
    tokenizer: &dyn Tokenizer,
) -> Vec<EntityMention> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for e in ner.extract(&sample.summary) {
        if excluded_categories.contains(&e.category) || !seen.insert(e.surface.clone()) {
            continue;
        }
        let summary_spans = find_standalone(&sample.summary, &e.surface);
        let doc_spans = find_standalone(&sample.document, &e.surface);
        let Some(first) = summary_spans.first().copied() else {
            continue;
        };
        if doc_spans.is_empty() {
            continue;
        }
        let pos = tokenizer.char_to_token(&sample.summary, first.start);
        if let Ok(m) = EntityMention::new(e.surface, e.category, doc_spans, summary_spans, pos) {
            out.push(m);
        }
    }
    out.sort_by_key(|m| m.summary_spans[0].start);
    out
}

/// `summary` with every span replaced by `mask_token`. Overlapping spans are
/// merged first.
pub fn masked_summary(summary: &str, spans: &[Span], mask_token: &str) -> String {
    let mut spans: Vec<Span> = spans.to_vec();
    spans.sort();
    let mut merged: Vec<Span> = Vec::new();
    for s in spans {
        match merged.last_mut() {
            Some(last) if s.start < last.end => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    let mut out = String::with_capacity(summary.len());
    let mut last = 0;
    for s in merged {
        out.push_str(&summary[last..s.start]);
        out.push_str(mask_token);
        last = s.end;
    }
    out.push_str(&summary[last..]);
    out
}

fn prefix(tokens: &[String], position: usize) -> Result<&[String]> {
    tokens.get(..position).ok_or(Error::PositionMismatch {
        position,
        len: tokens.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub accepted: bool,
    pub score: f64,
}

impl Verdict {
    fn new(score: f64, threshold: f64) -> Self {
        Verdict {
            accepted: score > threshold,
            score,
        }
    }
}

fn validate_unconditional(
    context: &str,
    mention: &EntityMention,
    summary_tokens: &[String],
    scorer: &dyn LikelihoodScorer,
    tokenizer: &dyn Tokenizer,
    threshold: f64,
) -> Result<Verdict> {
    let prefix = prefix(summary_tokens, mention.first_token_pos)?;
    let token = tokenizer.first_token(&mention.surface);
    let p = crate::adapters::check_probability(
        scorer.first_token_likelihood(context, prefix, &token)?,
    )?;
    Ok(Verdict::new(p, threshold))
}

/// Likelihood of the entity's first token under the null document.
pub fn validate_s1(
    mention: &EntityMention,
    summary_tokens: &[String],
    scorer: &dyn LikelihoodScorer,
    tokenizer: &dyn Tokenizer,
    config: &ValidationConfig,
) -> Result<Verdict> {
    validate_unconditional(
        &config.null_document,
        mention,
        summary_tokens,
        scorer,
        tokenizer,
        config.threshold,
    )
}

/// As [`validate_s1`], but the context is the summary with every entity span
/// (and every occurrence of the target) masked.
pub fn validate_s1_masked(
    mention: &EntityMention,
    summary: &str,
    entity_spans: &[Span],
    summary_tokens: &[String],
    scorer: &dyn LikelihoodScorer,
    tokenizer: &dyn Tokenizer,
    config: &ValidationConfig,
) -> Result<Verdict> {
    let context = masked_context(mention, summary, entity_spans, &config.mask_token);
    validate_unconditional(
        &context,
        mention,
        summary_tokens,
        scorer,
        tokenizer,
        config.threshold,
    )
}

pub fn masked_context(
    mention: &EntityMention,
    summary: &str,
    entity_spans: &[Span],
    mask_token: &str,
) -> String {
    let mut spans = entity_spans.to_vec();
    spans.extend_from_slice(&mention.summary_spans);
    masked_summary(summary, &spans, mask_token)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict {
    pub verdict: Verdict,
    pub original_likelihood: f64,
    pub counterfactual_likelihood: f64,
    pub replaced: Replaced,
}

/// Builds the counterfactual pair and scores the likelihood drop of the
/// entity's first token from the original to the counterfactual context.
#[allow(clippy::too_many_arguments)]
pub fn validate_s2(
    original: &Sample,
    mention: &EntityMention,
    candidate_surface: &str,
    scorer: &dyn LikelihoodScorer,
    config: &ValidationConfig,
    tokenizer: &dyn Tokenizer,
    replacement: &ReplacementOptions,
) -> Result<PairVerdict> {
    let replaced = apply_replacement(original, mention, candidate_surface, tokenizer, replacement)?;
    let (p_o, p_c) = pair_likelihoods(
        scorer,
        tokenizer,
        original,
        mention,
        &replaced.document,
        &replaced.summary,
        candidate_surface,
        replaced.first_token_pos,
    )?;
    Ok(PairVerdict {
        verdict: Verdict::new(p_o - p_c, config.threshold),
        original_likelihood: p_o,
        counterfactual_likelihood: p_c,
        replaced,
    })
}

/// `(P(e_o | D_o, S_o<t), P(e_c | D_c, S_c<t'))`, shared by validation and
/// the conditional-likelihood metric.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pair_likelihoods(
    scorer: &dyn LikelihoodScorer,
    tokenizer: &dyn Tokenizer,
    original: &Sample,
    mention: &EntityMention,
    cf_document: &str,
    cf_summary: &str,
    cf_surface: &str,
    cf_position: usize,
) -> Result<(f64, f64)> {
    let s_o = tokenizer.tokenize(&original.summary);
    let s_c = tokenizer.tokenize(cf_summary);
    let p_o = scorer.first_token_likelihood(
        &original.document,
        prefix(&s_o, mention.first_token_pos)?,
        &tokenizer.first_token(&mention.surface),
    )?;
    let p_c = scorer.first_token_likelihood(
        cf_document,
        prefix(&s_c, cf_position)?,
        &tokenizer.first_token(cf_surface),
    )?;
    Ok((
        crate::adapters::check_probability(p_o)?,
        crate::adapters::check_probability(p_c)?,
    ))
}
