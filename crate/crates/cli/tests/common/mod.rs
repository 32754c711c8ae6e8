//! Synthetic corpora, recognizers and scorer tables shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use factadapt_core::adapters::{NerConfig, RegexNer, TableEntry, TableScorerConfig, WILDCARD};
use factadapt_core::construction::masked_summary;
use factadapt_core::model::{CandidatePool, Dataset, PoolRecord, Sample, Span, Split};
use factadapt_core::{EntityRecognizer, Tokenizer};

pub const PERSON: [&str; 6] = [
    "Daniel Radcliffe",
    "Rupert Grint",
    "Emma Watson",
    "Marie Curie",
    "Alan Turing",
    "Ada Lovelace",
];
pub const GPE: [&str; 6] = ["Paris", "New York", "Lima", "Turkey", "Portballintrae", "Kyoto"];
pub const ORG: [&str; 6] = ["Acme Corp", "Globex", "Initech", "Umbrella", "Hooli", "Stark Industries"];

pub fn ner_config() -> NerConfig {
    let list = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    NerConfig {
        patterns: BTreeMap::from([("DATE".to_string(), vec![r"\b(?:19|20)\d\d\b".to_string()])]),
        gazetteer: BTreeMap::from([
            ("PERSON".to_string(), list(&PERSON)),
            ("GPE".to_string(), list(&GPE)),
            ("ORG".to_string(), list(&ORG)),
        ]),
    }
}

pub fn ner() -> RegexNer {
    RegexNer::from_config(&ner_config()).unwrap()
}

/// Every category holds six surfaces, so once the original is removed five
/// remain and the Top group has exactly one member.
pub fn pool() -> CandidatePool {
    let mut records = Vec::new();
    for (category, list) in [("PERSON", &PERSON), ("GPE", &GPE), ("ORG", &ORG)] {
        for (i, s) in list.iter().enumerate() {
            records.push(PoolRecord {
                surface: s.to_string(),
                category: category.to_string(),
                frequency: 10 + i as u64,
            });
        }
    }
    CandidatePool::from_records(records).unwrap()
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

/// `n` templated samples. Summaries mix entities copied from the document
/// with an occasional unsupported one and a year.
pub fn corpus(n: usize, seed: u64, split: Split) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let p1 = pick(&mut rng, &PERSON);
            let p2 = loop {
                let p = pick(&mut rng, &PERSON);
                if p != p1 {
                    break p;
                }
            };
            let g1 = pick(&mut rng, &GPE);
            let g2 = pick(&mut rng, &GPE);
            let o1 = pick(&mut rng, &ORG);
            let year = rng.random_range(1990..2024);
            let document = format!(
                "{p1} met {p2} in {g1} on behalf of {o1} in {year}. Later {p1} flew to {g2} and stayed there."
            );
            let summary = match rng.random_range(0..4) {
                0 => format!("{p1} visited {g1} in {year}."),
                1 => format!("{p1} and {p2} represented {o1}."),
                2 => format!("{o1} sent {} to {g2}.", pick(&mut rng, &PERSON)),
                _ => format!("The trip took place in {year}."),
            };
            Sample::new(format!("s{i:04}"), document, summary, split).unwrap()
        })
        .collect()
}

pub fn dataset(name: &str, n: usize, seed: u64) -> Dataset {
    Dataset::new(name, corpus(n, seed, Split::Test)).unwrap()
}

/// Every surface that can appear, any category.
pub fn all_surfaces() -> Vec<&'static str> {
    PERSON.iter().chain(GPE.iter()).chain(ORG.iter()).copied().collect()
}

/// A lookup table with random probabilities for every first token under the
/// null document, under any context, under each sample's own document, and
/// under each sample's masked summaries.
pub fn scorer_table(samples: &[Sample], tokenizer: &dyn Tokenizer, seed: u64) -> TableScorerConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ner = ner();
    let mut entries = Vec::new();
    let entry = |document: &str, token: String, prob: f64| TableEntry {
        document: document.to_string(),
        prefix: WILDCARD.to_string(),
        token,
        prob,
    };
    let mut firsts: Vec<String> = all_surfaces().iter().map(|s| tokenizer.first_token(s)).collect();
    firsts.sort();
    firsts.dedup();
    for t in &firsts {
        entries.push(entry(".", t.clone(), rng.random()));
        entries.push(entry(WILDCARD, t.clone(), rng.random()));
    }
    for s in samples {
        let found = ner.extract(&s.summary);
        let spans: Vec<Span> = found.iter().map(|e| e.span).collect();
        for e in &found {
            let token = tokenizer.first_token(&e.surface);
            let prefix = tokenizer.tokenize(&s.summary[..e.span.start]).join(" ");
            entries.push(entry(&s.document, token.clone(), rng.random()));
            for document in [s.document.as_str(), "."] {
                entries.push(TableEntry {
                    document: document.to_string(),
                    prefix: prefix.clone(),
                    token: token.clone(),
                    prob: rng.random(),
                });
            }
            entries.push(entry(&masked_summary(&s.summary, &spans, "[MASK]"), token, rng.random()));
        }
    }
    TableScorerConfig {
        id: "table".into(),
        default_prob: 0.5,
        entries,
    }
}

// =============================================================================
// Files
// =============================================================================

pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) {
    factadapt_core::io::write_jsonl(path, rows).unwrap();
}

/// Writes data, pool, scorer and NER files for a CLI run into `dir`.
pub struct Workspace {
    pub data: PathBuf,
    pub pool: PathBuf,
    pub scorer: PathBuf,
    pub ner: PathBuf,
}

pub fn workspace(dir: &Path, n: usize, seed: u64, tokenizer: &dyn Tokenizer) -> Workspace {
    let samples = corpus(n, seed, Split::Test);
    let ws = Workspace {
        data: dir.join("val.jsonl"),
        pool: dir.join("pool.jsonl"),
        scorer: dir.join("scorer.json"),
        ner: dir.join("ner.json"),
    };
    write_jsonl(&ws.data, &samples);
    factadapt_core::io::write_pool(&ws.pool, &pool()).unwrap();
    std::fs::write(
        &ws.scorer,
        serde_json::to_string(&scorer_table(&samples, tokenizer, seed ^ 0x5eed)).unwrap(),
    )
    .unwrap();
    std::fs::write(&ws.ner, serde_json::to_string(&ner_config()).unwrap()).unwrap();
    ws
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_factadapt"))
}
