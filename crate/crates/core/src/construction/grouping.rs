//! Likelihood ranking of counterfactual candidates and Top/Mid/Bot draws.

use std::cmp::Ordering;
use std::ops::Range;

use rand::Rng;

use crate::adapters::{LikelihoodScorer, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{GroupBoundaries, GroupSpec, PoolEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub entry: PoolEntry,
    pub likelihood: f64,
}

/// Sorts candidates by the likelihood of their first token, descending.
/// Ties fall back to frequency (descending) then surface (ascending).
pub fn rank_candidates(
    candidates: &[PoolEntry],
    scorer: &dyn LikelihoodScorer,
    tokenizer: &dyn Tokenizer,
    document: &str,
    prefix: &[String],
) -> Result<Vec<RankedCandidate>> {
    let mut ranked = candidates
        .iter()
        .map(|entry| {
            let token = tokenizer.first_token(&entry.surface);
            let likelihood = scorer.first_token_likelihood(document, prefix, &token)?;
            Ok(RankedCandidate {
                entry: entry.clone(),
                likelihood,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.likelihood
            .partial_cmp(&a.likelihood)
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.entry.frequency.cmp(&a.entry.frequency))
            .then_with(|| a.entry.surface.cmp(&b.entry.surface))
    });
    Ok(ranked)
}

/// 0-based index range of each group's members in a ranked list of `n`.
///
/// Rank fractions increase with the index, so every group is contiguous.
pub fn partition(n: usize, boundaries: &GroupBoundaries) -> [Range<usize>; 3] {
    let mut ranges = [0..0, 0..0, 0..0];
    for (slot, group) in crate::model::Group::ALL.into_iter().enumerate() {
        let members: Vec<usize> = (0..n)
            .filter(|&i| boundaries.classify(i + 1, n) == Some(group))
            .collect();
        if let (Some(&first), Some(&last)) = (members.first(), members.last()) {
            ranges[slot] = first..last + 1;
        }
    }
    ranges
}

/// Ranks `candidates`, keeps the requested group and draws `k` of them
/// uniformly without replacement. Asking for more than the group holds
/// returns the whole group with a warning.
#[allow(clippy::too_many_arguments)]
pub fn rank_and_group<R: Rng + ?Sized>(
    candidates: &[PoolEntry],
    scorer: &dyn LikelihoodScorer,
    tokenizer: &dyn Tokenizer,
    document: &str,
    prefix: &[String],
    spec: &GroupSpec,
    rng: &mut R,
    k: usize,
) -> Result<Vec<String>> {
    if candidates.is_empty() {
        return Err(Error::EmptyGroup(spec.group.to_string()));
    }
    let ranked = rank_candidates(candidates, scorer, tokenizer, document, prefix)?;
    let slot = crate::model::Group::ALL
        .iter()
        .position(|g| *g == spec.group)
        .expect("group in ALL");
    let range = partition(ranked.len(), &spec.boundaries)[slot].clone();
    let bucket = &ranked[range];
    if bucket.is_empty() {
        return Err(Error::EmptyGroup(spec.group.to_string()));
    }
    let k = k.max(1);
    if k > bucket.len() {
        log::warn!(
            "requested {k} candidates from group {} but only {} available",
            spec.group,
            bucket.len()
        );
    }
    let take = k.min(bucket.len());
    Ok(rand::seq::index::sample(rng, bucket.len(), take)
        .into_iter()
        .map(|i| bucket[i].entry.surface.clone())
        .collect())
}
