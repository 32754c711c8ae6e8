//! Factual-adaptiveness metrics and the entity-replacement-rate diagnostic.
//!
//! * `M_CL`: drop in the model's likelihood of the entity's first token from
//!   the original to the counterfactual context. Each term uses its own
//!   summary's token position.
//! * `M_FC`: drop in a consistency score between summaries generated from the
//!   original and the counterfactual document.
//! * Replacement rate: share of generated summaries that mention the
//!   counterfactual entity and none of the original entity.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{ConsistencyScorer, LikelihoodScorer, SummaryGenerator, Tokenizer};
use crate::construction::{pair_likelihoods, with_workers};
use crate::error::{Error, Result};
use crate::model::{
    CounterfactualSample, Dataset, MetricsReport, ReportMetadata, Sample, SampleMetrics, Stats,
};
use crate::replacement::word_map;
use crate::text::contains_standalone;

/// `P(e_o | D_o, S_o<t) - P(e_c | D_c, S_c<t')`.
pub fn m_cl(
    scorer: &dyn LikelihoodScorer,
    original: &Sample,
    cf: &CounterfactualSample,
    tokenizer: &dyn Tokenizer,
) -> Result<f64> {
    let (p_o, p_c) = pair_likelihoods(
        scorer,
        tokenizer,
        original,
        &cf.original_entity,
        &cf.counterfactual_document,
        &cf.counterfactual_summary,
        &cf.counterfactual_surface,
        cf.counterfactual_first_token_pos,
    )?;
    Ok(p_o - p_c)
}

/// `f(D_o, gen(D_o)) - f(D_c, gen(D_c))`.
pub fn m_fc(
    generator: &dyn SummaryGenerator,
    consistency: &dyn ConsistencyScorer,
    original_doc: &str,
    cf_doc: &str,
) -> Result<f64> {
    let s_o = generator.generate(original_doc)?;
    let s_c = generator.generate(cf_doc)?;
    Ok(consistency.score(original_doc, &s_o)? - consistency.score(cf_doc, &s_c)?)
}

// =============================================================================
// Replacement rate
// =============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateOptions {
    /// Count a summary as leaking the original entity when any of its
    /// replaced words appears, not only the full surface.
    pub partial_leakage: bool,
    /// Shorter original words are ignored as leakage evidence.
    pub min_word_len: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            partial_leakage: true,
            min_word_len: 2,
        }
    }
}

/// True when `generated` contains the counterfactual surface and nothing of
/// the original entity (word-boundary matching throughout).
pub fn adopts_counterfactual(cf: &CounterfactualSample, generated: &str, options: &RateOptions) -> bool {
    let original = &cf.original_entity.surface;
    if !contains_standalone(generated, &cf.counterfactual_surface)
        || contains_standalone(generated, original)
    {
        return false;
    }
    if !options.partial_leakage {
        return true;
    }
    // Words shared by both surfaces are not evidence either way.
    let leaked = word_map(original, &cf.counterfactual_surface)
        .map(|pairs| {
            pairs.iter().any(|(w, _)| {
                w.chars().count() >= options.min_word_len
                    && !contains_standalone(&cf.counterfactual_surface, w)
                    && contains_standalone(generated, w)
            })
        })
        .unwrap_or(false);
    !leaked
}

pub fn replacement_rate(
    pairs: &[(CounterfactualSample, String)],
    options: &RateOptions,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = pairs
        .iter()
        .filter(|(cf, g)| adopts_counterfactual(cf, g, options))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

// =============================================================================
// Set-level evaluation
// =============================================================================

fn index_originals(dataset: &Dataset) -> HashMap<&str, &Sample> {
    dataset.samples.iter().map(|s| (s.id.as_str(), s)).collect()
}

fn collect(results: Vec<Result<SampleMetrics>>, what: &str) -> (Vec<SampleMetrics>, usize) {
    let mut skipped = 0;
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(m) => out.push(m),
            Err(e) => {
                log::warn!("{what}: skipping sample: {e}");
                skipped += 1;
            }
        }
    }
    (out, skipped)
}

fn metadata(originals: &Dataset, scorer: &str, cfs: &[CounterfactualSample]) -> ReportMetadata {
    ReportMetadata {
        dataset: originals.name.clone(),
        ..metadata_for(scorer, cfs)
    }
}

fn metadata_for(scorer: &str, cfs: &[CounterfactualSample]) -> ReportMetadata {
    ReportMetadata {
        dataset: String::new(),
        scorer: scorer.to_string(),
        scenario: cfs.first().map(|c| c.scenario),
        group: cfs.first().map(|c| c.group),
        seeds: Vec::new(),
        single_seed: true,
    }
}

fn original_of<'a>(
    index: &HashMap<&str, &'a Sample>,
    cf: &CounterfactualSample,
) -> Result<&'a Sample> {
    index
        .get(cf.source_id.as_str())
        .copied()
        .ok_or_else(|| Error::InvalidConfig(format!("no original sample `{}`", cf.source_id)))
}

/// `M_CL` for every counterfactual; samples whose scorer fails are skipped
/// and counted.
pub fn evaluate_mcl(
    scorer: &dyn LikelihoodScorer,
    tokenizer: &dyn Tokenizer,
    originals: &Dataset,
    cfs: &[CounterfactualSample],
    workers: usize,
) -> Result<MetricsReport> {
    let index = index_originals(originals);
    let workers = crate::adapters::effective_workers(scorer, workers);
    let results = with_workers(workers, || {
        cfs.par_iter()
            .map(|cf| {
                let v = m_cl(scorer, original_of(&index, cf)?, cf, tokenizer)?;
                Ok(SampleMetrics {
                    source_id: cf.source_id.clone(),
                    m_cl: Some(v),
                    m_fc: None,
                    replaced: None,
                })
            })
            .collect()
    })?;
    let (per_sample, skipped) = collect(results, "m_cl");
    Ok(MetricsReport::from_samples(
        metadata(originals, scorer.id(), cfs),
        per_sample,
        skipped,
    ))
}

/// `M_FC` and the replacement flag for every counterfactual, from one pair of
/// generator calls each.
pub fn evaluate_generation(
    generator: &dyn SummaryGenerator,
    consistency: &dyn ConsistencyScorer,
    originals: &Dataset,
    cfs: &[CounterfactualSample],
    rate: &RateOptions,
    workers: usize,
) -> Result<MetricsReport> {
    let index = index_originals(originals);
    let results = with_workers(workers, || {
        cfs.par_iter()
            .map(|cf| {
                let original = original_of(&index, cf)?;
                let s_o = generator.generate(&original.document)?;
                let s_c = generator.generate(&cf.counterfactual_document)?;
                let fc = consistency.score(&original.document, &s_o)?
                    - consistency.score(&cf.counterfactual_document, &s_c)?;
                Ok(SampleMetrics {
                    source_id: cf.source_id.clone(),
                    m_cl: None,
                    m_fc: Some(fc),
                    replaced: Some(adopts_counterfactual(cf, &s_c, rate)),
                })
            })
            .collect()
    })?;
    let (per_sample, skipped) = collect(results, "m_fc");
    Ok(MetricsReport::from_samples(
        metadata(originals, generator.id(), cfs),
        per_sample,
        skipped,
    ))
}

/// Replacement flag for every counterfactual, generating only from the
/// counterfactual document.
pub fn evaluate_replacement(
    generator: &dyn SummaryGenerator,
    dataset_name: &str,
    cfs: &[CounterfactualSample],
    rate: &RateOptions,
) -> Result<MetricsReport> {
    if cfs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let results = cfs
        .iter()
        .map(|cf| {
            let g = generator.generate(&cf.counterfactual_document)?;
            Ok(SampleMetrics {
                source_id: cf.source_id.clone(),
                m_cl: None,
                m_fc: None,
                replaced: Some(adopts_counterfactual(cf, &g, rate)),
            })
        })
        .collect();
    let (per_sample, skipped) = collect(results, "replacement rate");
    let meta = ReportMetadata {
        dataset: dataset_name.to_string(),
        ..metadata_for(generator.id(), cfs)
    };
    Ok(MetricsReport::from_samples(meta, per_sample, skipped))
}

// =============================================================================
// Seed aggregation
// =============================================================================

/// Combines per-seed reports: each seed contributes one entry (its mean per
/// metric) and the aggregate is the mean and sample standard deviation of
/// those entries.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports.first().ok_or(Error::EmptyInput)?;
    let m = &first.metadata;
    for r in &reports[1..] {
        let o = &r.metadata;
        let mismatch = |field: &str| Error::MetadataMismatch(field.to_string());
        if o.dataset != m.dataset {
            return Err(mismatch("dataset"));
        }
        if o.scorer != m.scorer {
            return Err(mismatch("scorer"));
        }
        if o.scenario != m.scenario {
            return Err(mismatch("scenario"));
        }
        if o.group != m.group {
            return Err(mismatch("group"));
        }
    }
    let mean = |s: &Option<Stats>| s.map(|s| s.mean);
    let per_seed: Vec<SampleMetrics> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| SampleMetrics {
            source_id: match r.metadata.seeds.as_slice() {
                [seed] => format!("seed:{seed}"),
                _ => format!("run:{i}"),
            },
            m_cl: mean(&r.aggregate.m_cl),
            m_fc: mean(&r.aggregate.m_fc),
            replaced: None,
        })
        .collect();
    let mut out = MetricsReport::from_samples(
        ReportMetadata {
            seeds: reports.iter().flat_map(|r| r.metadata.seeds.clone()).collect(),
            single_seed: reports.len() == 1,
            ..m.clone()
        },
        per_seed,
        reports.iter().map(|r| r.skipped).sum(),
    );
    let rates: Vec<f64> = reports
        .iter()
        .filter_map(|r| mean(&r.aggregate.replacement_rate))
        .collect();
    out.aggregate.replacement_rate = Stats::from_values(&rates);
    Ok(out)
}

/// `metric,mean,std,n` rows for the aggregate block.
pub fn report_csv(report: &MetricsReport) -> String {
    let mut out = String::from("metric,mean,std,n\n");
    let a = &report.aggregate;
    for (name, stats) in [
        ("m_cl", a.m_cl),
        ("m_fc", a.m_fc),
        ("replacement_rate", a.replacement_rate),
    ] {
        if let Some(s) = stats {
            out.push_str(&format!("{name},{},{},{}\n", s.mean, s.std, s.n));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{
        FirstSentenceGenerator, FixedGenerator, LexicalConsistency, TableScorer,
        WhitespaceTokenizer, WILDCARD,
    };
    use crate::model::{EntityMention, Group, Scenario, Split};
    use crate::text::find_standalone;

    fn sample() -> Sample {
        Sample::new(
            "s",
            "Officials in Turkey said a woman was held.",
            "A woman was held in Turkey.",
            Split::Test,
        )
        .unwrap()
    }

    fn cf(original: &Sample, e_c: &str) -> CounterfactualSample {
        let m = EntityMention::new(
            "Turkey",
            "GPE",
            find_standalone(&original.document, "Turkey"),
            find_standalone(&original.summary, "Turkey"),
            5,
        )
        .unwrap();
        CounterfactualSample {
            source_id: original.id.clone(),
            counterfactual_document: original.document.replace("Turkey", e_c),
            counterfactual_summary: original.summary.replace("Turkey", e_c),
            original_entity: m,
            counterfactual_surface: e_c.to_string(),
            counterfactual_first_token_pos: 5,
            group: Group::Mid,
            scenario: Scenario::S2,
            validation_score: 0.5,
            rng_seed: 0,
        }
    }

    #[test]
    fn m_cl_identity_is_zero() {
        let s = sample();
        let scorer = TableScorer::new("phi", 0.37).unwrap();
        assert_eq!(m_cl(&scorer, &s, &cf(&s, "Turkey"), &WhitespaceTokenizer).unwrap(), 0.0);
    }

    #[test]
    fn m_cl_table_values() {
        let s = sample();
        let c = cf(&s, "Chile");
        let mut scorer = TableScorer::new("phi", 0.0).unwrap();
        scorer.insert(&s.document, WILDCARD, "Turkey", 0.734 + 0.1).unwrap();
        scorer.insert(&c.counterfactual_document, WILDCARD, "Chile", 0.1).unwrap();
        let v = m_cl(&scorer, &s, &c, &WhitespaceTokenizer).unwrap();
        assert!((v - 0.734).abs() < 1e-12, "{v}");

        let mut scorer = TableScorer::new("phi", 0.0).unwrap();
        scorer.insert(WILDCARD, WILDCARD, "Turkey", 0.2).unwrap();
        scorer.insert(WILDCARD, WILDCARD, "Chile", 0.5).unwrap();
        let v = m_cl(&scorer, &s, &c, &WhitespaceTokenizer).unwrap();
        assert!((v + 0.3).abs() < 1e-12);
    }

    #[test]
    fn m_cl_position_mismatch() {
        let s = sample();
        let mut c = cf(&s, "Chile");
        c.counterfactual_first_token_pos = 40;
        let scorer = TableScorer::new("phi", 0.5).unwrap();
        assert!(matches!(
            m_cl(&scorer, &s, &c, &WhitespaceTokenizer),
            Err(Error::PositionMismatch { position: 40, .. })
        ));
    }

    #[test]
    fn m_fc_cases() {
        let doc_o = "Turkey jailed Ece Heper. Officials declined to comment.";
        let doc_c = "Chile jailed Ece Heper. Officials declined to comment.";
        assert_eq!(m_fc(&FirstSentenceGenerator, &LexicalConsistency, doc_o, doc_o).unwrap(), 0.0);
        // echoing the first sentence is fully consistent with either document
        assert_eq!(m_fc(&FirstSentenceGenerator, &LexicalConsistency, doc_o, doc_c).unwrap(), 0.0);
        // a generator stuck on the original entity: 4/4 words vs 3/4 → 25 points
        let stuck = FixedGenerator {
            summary: "Turkey jailed Ece Heper".into(),
        };
        let v = m_fc(&stuck, &LexicalConsistency, doc_o, doc_c).unwrap();
        assert!((v - 25.0).abs() < 1e-12, "{v}");
    }

    /// Table 4: five system outputs on the Turkey → Portballintrae document.
    fn table4() -> Vec<(&'static str, &'static str)> {
        vec![
            ("NLL", "A Canadian woman has been charged with insulting the president of Turkey, her lawyer says."),
            ("Filtering", "A Canadian woman has been charged with insulting the president of Turkey, her lawyer says."),
            ("Decoding", "A Canadian woman has been arrested in Turkey for allegedly insulting the president of the Portballintrae province, her lawyer says."),
            ("CLIFF", "A Canadian woman has been arrested in Turkey on suspicion of insulting the president, her lawyer says."),
            ("Ours", "A Canadian woman has been arrested in Portballintrae on suspicion of insulting the president, her lawyer says."),
        ]
    }

    #[test]
    fn table4_rate_is_one_fifth() {
        let s = sample();
        let c = cf(&s, "Portballintrae");
        let pairs: Vec<_> = table4().iter().map(|(_, g)| (c.clone(), g.to_string())).collect();
        let rate = replacement_rate(&pairs, &RateOptions::default()).unwrap();
        assert!((rate - 0.2).abs() < 1e-12);
        let counted: Vec<_> = table4()
            .iter()
            .filter(|(_, g)| adopts_counterfactual(&c, g, &RateOptions::default()))
            .map(|(n, _)| *n)
            .collect();
        assert_eq!(counted, vec!["Ours"]);
    }

    #[test]
    fn rate_edges() {
        let s = sample();
        let c = cf(&s, "Portballintrae");
        assert!(matches!(replacement_rate(&[], &RateOptions::default()), Err(Error::EmptyInput)));
        let copy = vec![(c.clone(), c.counterfactual_summary.clone())];
        assert_eq!(replacement_rate(&copy, &RateOptions::default()).unwrap(), 1.0);
        let orig = vec![(c.clone(), s.summary.clone())];
        assert_eq!(replacement_rate(&orig, &RateOptions::default()).unwrap(), 0.0);
        let neither = vec![(c, "Nothing to see.".to_string())];
        assert_eq!(replacement_rate(&neither, &RateOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn partial_leakage_flag() {
        let s = Sample::new(
            "p",
            "Daniel Radcliffe starred.",
            "Daniel Radcliffe starred.",
            Split::Test,
        )
        .unwrap();
        let m = EntityMention::new(
            "Daniel Radcliffe",
            "PERSON",
            find_standalone(&s.document, "Daniel Radcliffe"),
            find_standalone(&s.summary, "Daniel Radcliffe"),
            0,
        )
        .unwrap();
        let c = CounterfactualSample {
            original_entity: m,
            counterfactual_surface: "Rupert Grint".into(),
            counterfactual_document: "Rupert Grint starred.".into(),
            counterfactual_summary: "Rupert Grint starred.".into(),
            ..cf(&sample(), "x")
        };
        let g = "Rupert Grint starred, not Daniel.";
        assert!(!adopts_counterfactual(&c, g, &RateOptions::default()));
        let lenient = RateOptions {
            partial_leakage: false,
            ..Default::default()
        };
        assert!(adopts_counterfactual(&c, g, &lenient));
    }

    fn report(scorer: &str, seed: u64, m_fc: f64) -> MetricsReport {
        MetricsReport::from_samples(
            ReportMetadata {
                dataset: "xsum".into(),
                scorer: scorer.into(),
                scenario: Some(Scenario::S2),
                group: Some(Group::Mid),
                seeds: vec![seed],
                single_seed: true,
            },
            vec![SampleMetrics {
                source_id: "a".into(),
                m_cl: None,
                m_fc: Some(m_fc),
                replaced: None,
            }],
            0,
        )
    }

    #[test]
    fn aggregate_three_seeds() {
        let reports = [report("nll", 1, 2.14), report("nll", 2, 2.43), report("nll", 3, 2.55)];
        let agg = aggregate(&reports).unwrap();
        let s = agg.aggregate.m_fc.unwrap();
        let mean = (2.14 + 2.43 + 2.55) / 3.0;
        let var = ((2.14f64 - mean).powi(2) + (2.43f64 - mean).powi(2) + (2.55f64 - mean).powi(2)) / 2.0;
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - var.sqrt()).abs() < 1e-12);
        assert!(!agg.metadata.single_seed);
        assert_eq!(agg.metadata.seeds, vec![1, 2, 3]);
        assert_eq!(agg.per_sample[0].source_id, "seed:1");
    }

    #[test]
    fn aggregate_single_and_mismatch() {
        let agg = aggregate(&[report("nll", 1, 2.0)]).unwrap();
        assert!(agg.metadata.single_seed);
        assert_eq!(agg.aggregate.m_fc.unwrap().std, 0.0);
        assert!(matches!(
            aggregate(&[report("nll", 1, 2.0), report("cliff", 2, 2.0)]),
            Err(Error::MetadataMismatch(f)) if f == "scorer"
        ));
        assert!(matches!(aggregate(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn csv_rows() {
        let csv = report_csv(&report("nll", 1, 2.5));
        assert_eq!(csv, "metric,mean,std,n\nm_fc,2.5,0,1\n");
    }
}
