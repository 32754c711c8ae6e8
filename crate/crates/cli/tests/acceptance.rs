//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use factadapt_core::adapters::{
    table_scorer_from_config, FirstSentenceGenerator, HashScorer, LexicalConsistency, NerConfig,
    RegexNer, TableScorer, WordPunctTokenizer, WILDCARD,
};
use factadapt_core::augmentation::{build_augmentation_set, filter_dataset, AugmentationConfig};
use factadapt_core::construction::{
    build_eval_set, extract_original_candidates, rank_and_group, score_dataset, search_threshold,
    threshold_grid, BuildOptions, ReasonCode, ThresholdSearch, Toolkit,
};
use factadapt_core::metrics::{adopts_counterfactual, aggregate, m_cl, m_fc, replacement_rate, RateOptions};
use factadapt_core::model::{
    CandidatePool, CounterfactualSample, Dataset, EntityMention, Group, GroupSpec, MetricsReport,
    PoolEntry, PoolRecord, ReportMetadata, Sample, SampleMetrics, Scenario, Span, Split,
    ValidationConfig,
};
use factadapt_core::pool::default_excluded_categories;
use factadapt_core::replacement::{apply_replacement, replace_in_text, word_map, ReplacementOptions};
use factadapt_core::text::{contains_standalone, count_standalone, find_standalone};
use factadapt_core::{EntityRecognizer, Error, LikelihoodScorer, Tokenizer};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("word map of the Radcliffe/Grint example", word_map_example),
        ("group partition matches brute-force rank fractions", group_partition),
        ("construction equals brute-force validation (S1, S1 masked, S2)", construction_oracle),
        ("metric identities and M_CL range", metric_identities),
        ("replacement invariants and degenerate rejection", replacement_invariants),
        ("threshold search on the uniform fixture and monotone extraction", threshold_search),
        ("augmentation sizing and seed-distinct subsets", augmentation_sizing),
        ("filtering drops only unsupported non-numeric entities", filtering),
        ("replacement-rate diagnostic", replacement_rate_diagnostic),
        ("build-eval-set output is byte-identical across runs and workers", cli_determinism),
        ("seed aggregation mean/std", seed_aggregation),
    ];

    // failures are reported on the criterion line instead
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
            Err(payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok(()) => println!("PASS  {:>2}  {name}  ({elapsed:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}  {name}  ({elapsed:.2?}): {why}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// =============================================================================
// 1. Word map
// =============================================================================

fn word_map_example() -> Outcome {
    let got = word_map("Daniel Radcliffe", "Rupert Grint").map_err(|e| e.to_string())?;
    let want = vec![
        ("Daniel".to_string(), "Rupert".to_string()),
        ("Radcliffe".to_string(), "Grint".to_string()),
    ];
    ensure!(got == want, "got {got:?}");
    Ok(())
}

// =============================================================================
// 2. Group partition
// =============================================================================

/// Group of 1-based rank `r` among `n`, by exact rational comparison.
fn brute_group(r: usize, n: usize) -> Option<Group> {
    if r * 50 <= n {
        None
    } else if r * 4 <= n {
        Some(Group::Top)
    } else if r * 4 <= 3 * n {
        Some(Group::Mid)
    } else {
        Some(Group::Bot)
    }
}

fn group_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=200usize {
        let candidates: Vec<PoolEntry> = (0..n)
            .map(|i| PoolEntry {
                surface: format!("C{i:03}"),
                frequency: 1,
            })
            .collect();
        let mut probs: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        probs.shuffle(&mut rng);
        let mut scorer = TableScorer::new("g", 0.0).unwrap();
        for (c, p) in candidates.iter().zip(&probs) {
            scorer.insert(WILDCARD, WILDCARD, c.surface.clone(), *p).unwrap();
        }
        let mut ranked: Vec<(f64, &str)> = candidates
            .iter()
            .zip(&probs)
            .map(|(c, p)| (*p, c.surface.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

        let mut union = BTreeSet::new();
        for group in Group::ALL {
            let expected: BTreeSet<String> = ranked
                .iter()
                .enumerate()
                .filter(|(i, _)| brute_group(i + 1, n) == Some(group))
                .map(|(_, (_, s))| s.to_string())
                .collect();
            let got: BTreeSet<String> = match rank_and_group(
                &candidates,
                &scorer,
                &WordPunctTokenizer,
                "doc",
                &[],
                &GroupSpec::new(group),
                &mut rng,
                n,
            ) {
                Ok(v) => v.into_iter().collect(),
                Err(Error::EmptyGroup(_)) => BTreeSet::new(),
                Err(e) => return Err(format!("n={n} {group}: {e}")),
            };
            ensure!(got == expected, "n={n} {group}: got {got:?}, expected {expected:?}");
            for s in &got {
                ensure!(union.insert(s.clone()), "n={n}: {s} in two groups");
            }
        }
        let eligible: BTreeSet<String> = ranked
            .iter()
            .enumerate()
            .filter(|(i, _)| (i + 1) * 50 > n)
            .map(|(_, (_, s))| s.to_string())
            .collect();
        ensure!(union == eligible, "n={n}: groups do not cover the ranks above 2%");
    }
    Ok(())
}

// =============================================================================
// 3. Construction oracle
// =============================================================================

#[derive(Debug, Default, PartialEq)]
struct Decisions {
    accepted: BTreeSet<(String, String, String)>,
    rejected: BTreeSet<(String, String)>,
    scores: BTreeMap<(String, String), f64>,
}

/// The summary with every span replaced by `[MASK]`. Spans are disjoint.
fn mask(summary: &str, spans: &[Span]) -> String {
    let mut spans = spans.to_vec();
    spans.sort();
    let mut out = String::new();
    let mut at = 0;
    for s in spans {
        out.push_str(&summary[at..s.start]);
        out.push_str("[MASK]");
        at = s.end;
    }
    out + &summary[at..]
}

/// Scores every summary entity directly, without the construction module.
/// Relies on the fixture pool's shape: five eligible candidates per entity,
/// so the Top group is exactly rank 1 and no draw is needed.
fn brute_force(
    samples: &[Sample],
    pool: &CandidatePool,
    scorer: &dyn LikelihoodScorer,
    tok: &dyn Tokenizer,
    ner: &RegexNer,
    scenario: Scenario,
    tau: f64,
) -> Decisions {
    let excluded = default_excluded_categories();
    let mut out = Decisions::default();
    let p = |doc: &str, prefix: &[String], token: &str| scorer.first_token_likelihood(doc, prefix, token).unwrap();
    for s in samples {
        let found = ner.extract(&s.summary);
        let all_spans: Vec<Span> = found.iter().map(|e| e.span).collect();
        let mut seen = HashSet::new();
        for e in &found {
            if excluded.contains(&e.category)
                || !seen.insert(e.surface.clone())
                || !contains_standalone(&s.document, &e.surface)
            {
                continue;
            }
            let prefix = tok.tokenize(&s.summary[..e.span.start]);
            let token = tok.first_token(&e.surface);

            let mut ranked: Vec<(f64, u64, String)> = pool
                .bucket(&e.category)
                .iter()
                .filter(|c| c.surface != e.surface)
                .map(|c| (p(&s.document, &prefix, &tok.first_token(&c.surface)), c.frequency, c.surface.clone()))
                .collect();
            ranked.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(b.1.cmp(&a.1))
                    .then(a.2.cmp(&b.2))
            });
            let top: Vec<usize> = (1..=ranked.len())
                .filter(|&r| brute_group(r, ranked.len()) == Some(Group::Top))
                .collect();
            assert_eq!(top.len(), 1, "fixture pool must give a single Top member");
            let cf = ranked[top[0] - 1].2.clone();

            let key = (s.id.clone(), e.surface.clone());
            let mention = EntityMention::new(
                e.surface.clone(),
                e.category.clone(),
                find_standalone(&s.document, &e.surface),
                find_standalone(&s.summary, &e.surface),
                prefix.len(),
            )
            .unwrap();
            let replaced = apply_replacement(s, &mention, &cf, tok, &ReplacementOptions::default())
                .ok()
                .filter(|r| {
                    !contains_standalone(&r.document, &e.surface) && contains_standalone(&r.summary, &cf)
                });
            let score = match scenario {
                Scenario::S1 => p(".", &prefix, &token),
                Scenario::S1Masked => p(&mask(&s.summary, &all_spans), &prefix, &token),
                Scenario::S2 => match &replaced {
                    Some(r) => {
                        let at = find_standalone(&r.summary, &cf)[0].start;
                        let cf_prefix = tok.tokenize(&r.summary[..at]);
                        p(&s.document, &prefix, &token) - p(&r.document, &cf_prefix, &tok.first_token(&cf))
                    }
                    None => {
                        out.rejected.insert(key);
                        continue;
                    }
                },
            };
            if score > tau && replaced.is_some() {
                out.accepted.insert((s.id.clone(), e.surface.clone(), cf));
                out.scores.insert(key, score);
            } else {
                out.rejected.insert(key);
            }
        }
    }
    out
}

fn construction_oracle() -> Outcome {
    let tok = WordPunctTokenizer;
    let ner = common::ner();
    let pool = common::pool();
    let ds = common::dataset("synthetic", 200, 3);
    let scorer = table_scorer_from_config(&common::scorer_table(&ds.samples, &tok, 30)).unwrap();
    let tools = Toolkit {
        scorer: &scorer,
        tokenizer: &tok,
        ner: &ner,
    };
    for scenario in [Scenario::S1, Scenario::S1Masked, Scenario::S2] {
        for tau in [0.0, 0.3, 0.7] {
            let options = BuildOptions::new(
                ValidationConfig::new(scenario, tau).unwrap(),
                GroupSpec::new(Group::Top),
                11,
            );
            let built = build_eval_set(&ds, &pool, &tools, &options).map_err(|e| e.to_string())?;
            let mut got = Decisions::default();
            for cf in &built.samples {
                let key = (cf.source_id.clone(), cf.original_entity.surface.clone());
                got.accepted.insert((key.0.clone(), key.1.clone(), cf.counterfactual_surface.clone()));
                got.scores.insert(key, cf.validation_score);
            }
            for rec in &built.skipped {
                if matches!(rec.code, ReasonCode::BelowThreshold | ReasonCode::ReplacementError) {
                    got.rejected.insert((rec.sample_id.clone(), rec.entity.clone().unwrap_or_default()));
                }
            }
            let want = brute_force(&ds.samples, &pool, &scorer, &tok, &ner, scenario, tau);
            ensure!(
                got.accepted == want.accepted,
                "{scenario} τ={tau}: accepted sets differ ({} vs {})",
                got.accepted.len(),
                want.accepted.len()
            );
            ensure!(got.rejected == want.rejected, "{scenario} τ={tau}: rejected sets differ");
            ensure!(got.scores == want.scores, "{scenario} τ={tau}: validation scores differ");
            ensure!(!want.accepted.is_empty() || tau > 0.5, "{scenario} τ={tau}: nothing accepted");
        }
    }
    Ok(())
}

// =============================================================================
// 4. Metric identities
// =============================================================================

/// A counterfactual that changes nothing.
fn identity(s: &Sample, m: &EntityMention) -> CounterfactualSample {
    CounterfactualSample {
        source_id: s.id.clone(),
        counterfactual_document: s.document.clone(),
        counterfactual_summary: s.summary.clone(),
        original_entity: m.clone(),
        counterfactual_surface: m.surface.clone(),
        counterfactual_first_token_pos: m.first_token_pos,
        group: Group::Top,
        scenario: Scenario::S2,
        validation_score: 0.0,
        rng_seed: 0,
    }
}

fn metric_identities() -> Outcome {
    let tok = WordPunctTokenizer;
    let ner = common::ner();
    let excluded = default_excluded_categories();
    let samples = common::corpus(1000, 4, Split::Test);
    let mentions: Vec<(&Sample, EntityMention)> = samples
        .iter()
        .flat_map(|s| {
            extract_original_candidates(s, &ner, &excluded, &tok)
                .into_iter()
                .map(move |m| (s, m))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    for (s, m) in mentions.choose_multiple(&mut rng, 100) {
        let scorer = HashScorer::new("h", rng.random());
        let v = m_cl(&scorer, s, &identity(s, m), &tok).map_err(|e| e.to_string())?;
        ensure!(v.abs() <= 1e-12, "m_cl {v} on identity counterfactual of {}", s.id);
        let f = m_fc(&FirstSentenceGenerator, &LexicalConsistency, &s.document, &s.document)
            .map_err(|e| e.to_string())?;
        ensure!(f.abs() <= 1e-12, "m_fc {f} on identity counterfactual of {}", s.id);
    }

    let pool = common::pool();
    let mut checked = 0;
    while checked < 1000 {
        let (s, m) = &mentions[rng.random_range(0..mentions.len())];
        let bucket = pool.bucket(&m.category);
        let cf_surface = &bucket[rng.random_range(0..bucket.len())].surface;
        let Ok(r) = apply_replacement(s, m, cf_surface, &tok, &ReplacementOptions::default()) else {
            continue;
        };
        let cf = CounterfactualSample {
            counterfactual_document: r.document,
            counterfactual_summary: r.summary,
            counterfactual_surface: cf_surface.clone(),
            counterfactual_first_token_pos: r.first_token_pos,
            ..identity(s, m)
        };
        let mut table = common::scorer_table(std::slice::from_ref(*s), &tok, rng.random());
        table.default_prob = rng.random();
        let scorer = table_scorer_from_config(&table).unwrap();
        let v = m_cl(&scorer, s, &cf, &tok).map_err(|e| e.to_string())?;
        ensure!((-1.0..=1.0).contains(&v), "m_cl {v} outside [-1, 1]");
        checked += 1;
    }
    Ok(())
}

// =============================================================================
// 5. Replacement invariants
// =============================================================================

fn replacement_invariants() -> Outcome {
    let tok = WordPunctTokenizer;
    let ner = common::ner();
    let excluded = default_excluded_categories();
    let opts = ReplacementOptions::default();
    let pool = common::pool();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples = common::corpus(500, 5, Split::Test);
    let mut replaced_count = 0;
    for s in &samples {
        for m in extract_original_candidates(s, &ner, &excluded, &tok) {
            let bucket: Vec<&str> = pool
                .bucket(&m.category)
                .iter()
                .map(|e| e.surface.as_str())
                .filter(|c| *c != m.surface)
                .collect();
            let cf = bucket[rng.random_range(0..bucket.len())];
            match apply_replacement(s, &m, cf, &tok, &opts) {
                Ok(r) => {
                    replaced_count += 1;
                    ensure!(
                        count_standalone(&r.document, &m.surface) == 0
                            && count_standalone(&r.summary, &m.surface) == 0,
                        "{}: `{}` survives replacement by `{cf}`",
                        s.id,
                        m.surface
                    );
                    for text in [&r.document, &r.summary] {
                        let again = replace_in_text(text, &m.surface, cf, &opts).map_err(|e| e.to_string())?;
                        ensure!(&again == text, "{}: replacement not idempotent", s.id);
                    }
                }
                Err(Error::DegenerateReplacement { .. }) => {}
                Err(e) => return Err(format!("{}: {e}", s.id)),
            }
            // a counterfactual that contains the original cannot remove it
            let wrapping = format!("Greater {}", m.surface);
            ensure!(
                matches!(
                    apply_replacement(s, &m, &wrapping, &tok, &opts),
                    Err(Error::DegenerateReplacement { .. })
                ),
                "{}: `{wrapping}` accepted as a replacement for `{}`",
                s.id,
                m.surface
            );
        }
    }
    ensure!(replaced_count > 500, "only {replaced_count} replacements exercised");

    // the pipeline logs degenerate candidates and never emits them
    let mut records: Vec<PoolRecord> = pool.records().collect();
    for (surface, category) in [("Greater Paris", "GPE"), ("Old Kyoto", "GPE"), ("Ada Lovelace Jr", "PERSON")] {
        records.push(PoolRecord {
            surface: surface.into(),
            category: category.into(),
            frequency: 1,
        });
    }
    let pool = CandidatePool::from_records(records).unwrap();
    let ds = Dataset::new("invariants", samples).unwrap();
    let scorer = table_scorer_from_config(&common::scorer_table(&ds.samples, &tok, 50)).unwrap();
    let tools = Toolkit {
        scorer: &scorer,
        tokenizer: &tok,
        ner: &ner,
    };
    let mut degenerate_logged = 0;
    for group in Group::ALL {
        let options = BuildOptions {
            fan_out: 10,
            ..BuildOptions::new(ValidationConfig::new(Scenario::S1, 0.0).unwrap(), GroupSpec::new(group), 5)
        };
        let built = build_eval_set(&ds, &pool, &tools, &options).map_err(|e| e.to_string())?;
        for cf in &built.samples {
            cf.check_invariants().map_err(|e| format!("emitted invalid sample: {e}"))?;
            ensure!(
                !contains_standalone(&cf.counterfactual_surface, &cf.original_entity.surface),
                "emitted degenerate pair {} → {}",
                cf.original_entity.surface,
                cf.counterfactual_surface
            );
        }
        degenerate_logged += built
            .skipped
            .iter()
            .filter(|r| {
                r.code == ReasonCode::ReplacementError
                    && matches!((&r.entity, &r.counterfactual), (Some(e), Some(c)) if contains_standalone(c, e))
            })
            .count();
    }
    ensure!(degenerate_logged > 0, "no degenerate candidate was ever drawn");
    Ok(())
}

// =============================================================================
// 6. Threshold search
// =============================================================================

/// 100 samples, one entity each, whose null-document scores are
/// (i + 0.5) / 100: the extracted fraction at τ is 1 − τ on the grid.
fn uniform_fixture() -> (Dataset, CandidatePool, RegexNer, TableScorer) {
    let surfaces: Vec<String> = (0..100).map(|i| format!("Zed{i:03}")).collect();
    let ner = RegexNer::from_config(&NerConfig {
        patterns: BTreeMap::new(),
        gazetteer: BTreeMap::from([("X".to_string(), surfaces.clone())]),
    })
    .unwrap();
    let samples: Vec<Sample> = surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Sample::new(format!("u{i:03}"), format!("{s} arrived today."), format!("{s} arrived."), Split::Validation)
                .unwrap()
        })
        .collect();
    let pool = CandidatePool::from_records(surfaces.iter().map(|s| PoolRecord {
        surface: s.clone(),
        category: "X".into(),
        frequency: 1,
    }))
    .unwrap();
    let mut scorer = TableScorer::new("uniform", 0.5).unwrap();
    for (i, s) in surfaces.iter().enumerate() {
        scorer.insert(".", WILDCARD, s.clone(), (i as f64 + 0.5) / 100.0).unwrap();
    }
    (Dataset::new("uniform", samples).unwrap(), pool, ner, scorer)
}

fn threshold_search() -> Outcome {
    let tok = WordPunctTokenizer;
    let (ds, pool, ner, scorer) = uniform_fixture();
    let tools = Toolkit {
        scorer: &scorer,
        tokenizer: &tok,
        ner: &ner,
    };
    let options = BuildOptions::new(
        ValidationConfig::new(Scenario::S1, 0.0).unwrap(),
        GroupSpec::new(Group::Top),
        6,
    );
    let result = search_threshold(&ds, &pool, &tools, &options, &ThresholdSearch::new(0.10, 0.01).unwrap())
        .map_err(|e| e.to_string())?;
    ensure!(
        (result.threshold - 0.90).abs() <= 0.05 + 1e-9,
        "τ = {} (fraction {})",
        result.threshold,
        result.fraction
    );

    let ner = common::ner();
    let pool = common::pool();
    let ds = common::dataset("monotone", 100, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 0..50u64 {
        let scenario = [Scenario::S1, Scenario::S1Masked, Scenario::S2][k as usize % 3];
        let group = Group::ALL[rng.random_range(0..3)];
        let scorer = table_scorer_from_config(&common::scorer_table(&ds.samples, &tok, 600 + k)).unwrap();
        let tools = Toolkit {
            scorer: &scorer,
            tokenizer: &tok,
            ner: &ner,
        };
        let options = BuildOptions::new(ValidationConfig::new(scenario, 0.0).unwrap(), GroupSpec::new(group), k);
        let scored = score_dataset(&ds, &pool, &tools, &options).map_err(|e| e.to_string())?;
        let mut last = usize::MAX;
        for tau in threshold_grid(scenario, 0.05) {
            let n = scored.materialize(tau).samples.len();
            ensure!(n <= last, "scorer {k} ({scenario}, {group}): {n} > {last} at τ={tau}");
            last = n;
        }
    }
    Ok(())
}

// =============================================================================
// 7. Augmentation sizing
// =============================================================================

fn augmentation_sizing() -> Outcome {
    let tok = WordPunctTokenizer;
    let ner = common::ner();
    let pool = common::pool();
    let train = Dataset::new("train", common::corpus(1000, 7, Split::Train)).unwrap();
    let scorer = table_scorer_from_config(&common::scorer_table(&train.samples, &tok, 70)).unwrap();
    let tools = Toolkit {
        scorer: &scorer,
        tokenizer: &tok,
        ner: &ner,
    };
    let config = |ratio: f64, seed: u64| AugmentationConfig {
        ratio,
        group: Group::Mid,
        scenario: Scenario::S1,
        threshold: 0.0,
        negatives_per_sample: 1,
        seed,
        construction_seed: 1,
    };
    for ratio in [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.75, 0.9] {
        let out = build_augmentation_set(&train, &pool, &tools, &config(ratio, 1), 2).map_err(|e| e.to_string())?;
        let want = (ratio * 1000.0_f64).round() as usize;
        ensure!(
            out.samples.len() == want,
            "ρ={ratio}: {} samples, expected {want} ({} available)",
            out.samples.len(),
            out.available
        );
    }
    let mut subsets: Vec<BTreeSet<(String, String, String)>> = Vec::new();
    for seed in 1..=5 {
        let out = build_augmentation_set(&train, &pool, &tools, &config(0.1, seed), 2).map_err(|e| e.to_string())?;
        ensure!(out.samples.len() == 100, "seed {seed}: {} samples", out.samples.len());
        let set = out
            .samples
            .iter()
            .map(|c| (c.source_id.clone(), c.original_entity.surface.clone(), c.counterfactual_surface.clone()))
            .collect::<BTreeSet<_>>();
        ensure!(set.len() == 100, "seed {seed}: duplicate draws");
        ensure!(!subsets.contains(&set), "seed {seed} repeats an earlier subset");
        subsets.push(set);
    }
    Ok(())
}

// =============================================================================
// 8. Filtering
// =============================================================================

fn filtering() -> Outcome {
    let ner = RegexNer::from_config(&NerConfig {
        patterns: BTreeMap::from([
            ("DATE".to_string(), vec![r"\b(?:19|20)\d\d\b".to_string()]),
            ("TIME".to_string(), vec![r"\b\d{1,2}:\d\d\b".to_string()]),
            ("QUANTITY".to_string(), vec![r"\b\d+ (?:km|kg|people)\b".to_string()]),
        ]),
        gazetteer: BTreeMap::from([
            ("PERSON".to_string(), vec!["Alan Turing".to_string(), "Ada Lovelace".to_string()]),
            ("GPE".to_string(), vec!["Paris".to_string(), "Kyoto".to_string()]),
        ]),
    })
    .unwrap();
    let document = "Alan Turing lectured in Paris in 1950 to 200 people at 09:15.";
    let mut expected_drops = BTreeSet::new();
    let samples: Vec<Sample> = (0..20)
        .map(|i| {
            let (summary, drop) = match i % 5 {
                0 => ("Alan Turing lectured in Paris.", false),
                1 => ("Ada Lovelace lectured in Paris.", true),
                2 => ("Alan Turing lectured in 1951.", false),
                3 => ("At 10:30, 300 people heard Alan Turing.", false),
                _ => ("Alan Turing lectured in Kyoto in 1951.", true),
            };
            let id = format!("f{i:02}");
            if drop {
                expected_drops.insert(id.clone());
            }
            Sample::new(id, document, summary, Split::Train).unwrap()
        })
        .collect();
    let ds = Dataset::new("filter", samples).unwrap();
    let outcome = filter_dataset(&ds, &ner, &default_excluded_categories().into_iter().collect());
    let dropped: BTreeSet<String> = outcome.dropped.iter().map(|d| d.sample.id.clone()).collect();
    ensure!(dropped == expected_drops, "dropped {dropped:?}, expected {expected_drops:?}");
    ensure!(outcome.kept.len() == 12, "kept {}", outcome.kept.len());
    for d in &outcome.dropped {
        ensure!(
            d.offending_entities
                .iter()
                .all(|e| !["DATE", "TIME", "QUANTITY"].contains(&e.category.as_str())),
            "{}: numeric entity reported as offending",
            d.sample.id
        );
    }
    Ok(())
}

// =============================================================================
// 9. Replacement rate
// =============================================================================

fn replacement_rate_diagnostic() -> Outcome {
    let tok = WordPunctTokenizer;
    let s = Sample::new(
        "t4",
        "A Canadian woman was detained in Turkey after a post about the president. Her lawyer said she denies insulting him.",
        "A Canadian woman has been arrested in Turkey on suspicion of insulting the president, her lawyer says.",
        Split::Test,
    )
    .unwrap();
    let m = EntityMention::new(
        "Turkey",
        "GPE",
        find_standalone(&s.document, "Turkey"),
        find_standalone(&s.summary, "Turkey"),
        tok.char_to_token(&s.summary, find_standalone(&s.summary, "Turkey")[0].start),
    )
    .unwrap();
    let r = apply_replacement(&s, &m, "Portballintrae", &tok, &ReplacementOptions::default())
        .map_err(|e| e.to_string())?;
    let cf = CounterfactualSample {
        source_id: s.id.clone(),
        counterfactual_document: r.document,
        counterfactual_summary: r.summary.clone(),
        original_entity: m,
        counterfactual_surface: "Portballintrae".into(),
        counterfactual_first_token_pos: r.first_token_pos,
        group: Group::Bot,
        scenario: Scenario::S1,
        validation_score: 0.9,
        rng_seed: 0,
    };
    let opts = RateOptions::default();
    let rate = |gens: &[&str]| {
        let pairs: Vec<_> = gens.iter().map(|g| (cf.clone(), g.to_string())).collect();
        replacement_rate(&pairs, &opts).unwrap()
    };
    ensure!(rate(&[&r.summary]) == 1.0, "S_c scored {}", rate(&[&r.summary]));
    ensure!(rate(&[&s.summary]) == 0.0, "S_o scored {}", rate(&[&s.summary]));

    let outputs = [
        ("NLL", "A Canadian woman has been charged with insulting the president of Turkey, her lawyer says."),
        ("Filtering", "A Canadian woman has been charged with insulting the president of Turkey, her lawyer says."),
        ("Decoding", "A Canadian woman has been arrested in Turkey for allegedly insulting the president of the Portballintrae province, her lawyer says."),
        ("CLIFF", "A Canadian woman has been arrested in Turkey on suspicion of insulting the president, her lawyer says."),
        ("Ours", "A Canadian woman has been arrested in Portballintrae on suspicion of insulting the president, her lawyer says."),
    ];
    let r4 = rate(&outputs.map(|(_, g)| g));
    ensure!((r4 - 0.2).abs() < 1e-12, "rate {r4}");
    let counted: Vec<&str> = outputs
        .iter()
        .filter(|(_, g)| adopts_counterfactual(&cf, g, &opts))
        .map(|(n, _)| *n)
        .collect();
    ensure!(counted == ["Ours"], "counted {counted:?}");
    Ok(())
}

// =============================================================================
// 10. CLI determinism
// =============================================================================

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ws = common::workspace(dir.path(), 200, 10, &WordPunctTokenizer);
    let run = |tag: &str, workers: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = dir.path().join(format!("cf_{tag}.jsonl"));
        let status = common::bin()
            .env_remove("FACTADAPT_CACHE")
            .args(["--scorer"])
            .arg(&ws.scorer)
            .arg("--ner")
            .arg(&ws.ner)
            .args(["--scenario", "s2", "--group", "mid", "--threshold", "0.0", "--seed", "7", "--workers", workers])
            .arg("build-eval-set")
            .arg("--data")
            .arg(&ws.data)
            .arg("--pool")
            .arg(&ws.pool)
            .arg("--output")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("exit {:?}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
        }
        let skipped = out.with_file_name(format!("cf_{tag}.jsonl.skipped.jsonl"));
        Ok((
            std::fs::read(&out).map_err(|e| e.to_string())?,
            std::fs::read(skipped).map_err(|e| e.to_string())?,
        ))
    };
    let a = run("a", "1")?;
    let b = run("b", "1")?;
    let c = run("c", "4")?;
    ensure!(!a.0.is_empty(), "no counterfactuals emitted");
    ensure!(a == b, "two runs with one worker differ");
    ensure!(a == c, "one and four workers differ");
    Ok(())
}

// =============================================================================
// 11. Seed aggregation
// =============================================================================

fn seed_aggregation() -> Outcome {
    let reports: Vec<MetricsReport> = [(1u64, 2.14), (2, 2.43), (3, 2.55)]
        .iter()
        .map(|&(seed, v)| {
            MetricsReport::from_samples(
                ReportMetadata {
                    dataset: "xsum".into(),
                    scorer: "bart-nll".into(),
                    scenario: Some(Scenario::S2),
                    group: Some(Group::Top),
                    seeds: vec![seed],
                    single_seed: true,
                },
                vec![SampleMetrics {
                    source_id: format!("x{seed}"),
                    m_cl: None,
                    m_fc: Some(v),
                    replaced: None,
                }],
                0,
            )
        })
        .collect();
    let agg = aggregate(&reports).map_err(|e| e.to_string())?;
    let s = agg.aggregate.m_fc.ok_or("no m_fc aggregate")?;
    // (2.14 + 2.43 + 2.55) / 3, and the n − 1 standard deviation
    let mean = 2.373_333_333_333_333;
    let std = 0.210_792_156_716_831_6;
    ensure!((s.mean - mean).abs() < 1e-9, "mean {}", s.mean);
    ensure!((s.std - std).abs() < 1e-9, "std {}", s.std);
    ensure!(s.n == 3 && !agg.metadata.single_seed, "n {} single_seed {}", s.n, agg.metadata.single_seed);
    Ok(())
}
