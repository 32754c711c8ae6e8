//! Domain types shared by every stage of the pipeline.
//!
//! Spans are byte ranges into UTF-8 text. Token positions are 0-based.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

// =============================================================================
// Samples
// =============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    #[default]
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

/// A document/summary pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub document: String,
    pub summary: String,
    #[serde(default)]
    pub split: Split,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        document: impl Into<String>,
        summary: impl Into<String>,
        split: Split,
    ) -> Result<Self> {
        let sample = Sample {
            id: id.into(),
            document: document.into(),
            summary: summary.into(),
            split,
        };
        sample.check(None)?;
        Ok(sample)
    }

    fn check(&self, line: Option<usize>) -> Result<()> {
        for (field, text) in [("document", &self.document), ("summary", &self.summary)] {
            if text.trim().is_empty() {
                return Err(Error::EmptyText {
                    field: field.into(),
                    line,
                });
            }
        }
        Ok(())
    }
}

/// Validates one raw record (`id`, `document`, `summary`, optional `split`).
pub fn validate_sample(raw: &serde_json::Value) -> Result<Sample> {
    validate_record(raw, None)
}

pub(crate) fn validate_record(raw: &serde_json::Value, line: Option<usize>) -> Result<Sample> {
    let field = |name: &str| -> Result<String> {
        match raw.get(name) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(serde_json::Value::Number(n)) if name == "id" => Ok(n.to_string()),
            _ => Err(Error::MissingField {
                field: name.into(),
                line,
            }),
        }
    };
    let id = field("id")?;
    let document = field("document")?;
    let summary = field("summary")?;
    let split = match raw.get("split").and_then(|v| v.as_str()) {
        Some(s) => s.parse()?,
        None => Split::default(),
    };
    let sample = Sample {
        id,
        document,
        summary,
        split,
    };
    sample.check(line)?;
    Ok(sample)
}

/// Named collection of samples with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, s) in samples.iter().enumerate() {
            if let Some(first) = seen.insert(&s.id, i) {
                return Err(Error::DuplicateId {
                    id: s.id.clone(),
                    lines: vec![first + 1, i + 1],
                });
            }
        }
        Ok(Dataset {
            name: name.into(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

// =============================================================================
// Entities
// =============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// An original-entity candidate: a surface present in both the document and
/// the summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub category: String,
    pub doc_spans: Vec<Span>,
    pub summary_spans: Vec<Span>,
    /// Token index of the earliest summary occurrence.
    pub first_token_pos: usize,
}

impl EntityMention {
    pub fn new(
        surface: impl Into<String>,
        category: impl Into<String>,
        doc_spans: Vec<Span>,
        summary_spans: Vec<Span>,
        first_token_pos: usize,
    ) -> Result<Self> {
        let surface = surface.into();
        if surface.trim().is_empty() {
            return Err(Error::EmptyEntity);
        }
        if doc_spans.is_empty() {
            return Err(Error::EntityNotFound {
                surface,
                field: "document".into(),
            });
        }
        if summary_spans.is_empty() {
            return Err(Error::EntityNotFound {
                surface,
                field: "summary".into(),
            });
        }
        Ok(EntityMention {
            surface,
            category: category.into(),
            doc_spans,
            summary_spans,
            first_token_pos,
        })
    }
}

// =============================================================================
// Candidate pool
// =============================================================================

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub surface: String,
    pub frequency: u64,
}

/// One line of the persisted pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub surface: String,
    pub category: String,
    pub frequency: u64,
}

/// Counterfactual entity inventory keyed by NER category.
///
/// Buckets are kept ordered by (frequency desc, surface asc).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub by_category: BTreeMap<String, Vec<PoolEntry>>,
}

impl CandidatePool {
    pub fn from_records(records: impl IntoIterator<Item = PoolRecord>) -> Result<Self> {
        let mut by_category: BTreeMap<String, Vec<PoolEntry>> = BTreeMap::new();
        for r in records {
            if r.frequency == 0 {
                return Err(Error::InvalidConfig(format!(
                    "pool entry `{}` ({}) has frequency 0",
                    r.surface, r.category
                )));
            }
            let bucket = by_category.entry(r.category.clone()).or_default();
            if bucket.iter().any(|e| e.surface == r.surface) {
                return Err(Error::InvalidConfig(format!(
                    "pool entry `{}` ({}) listed twice",
                    r.surface, r.category
                )));
            }
            bucket.push(PoolEntry {
                surface: r.surface,
                frequency: r.frequency,
            });
        }
        for bucket in by_category.values_mut() {
            sort_bucket(bucket);
        }
        Ok(CandidatePool { by_category })
    }

    pub fn bucket(&self, category: &str) -> &[PoolEntry] {
        self.by_category
            .get(category)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn frequency(&self, category: &str, surface: &str) -> Option<u64> {
        self.bucket(category)
            .iter()
            .find(|e| e.surface == surface)
            .map(|e| e.frequency)
    }

    pub fn len(&self) -> usize {
        self.by_category.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> impl Iterator<Item = PoolRecord> + '_ {
        self.by_category.iter().flat_map(|(cat, bucket)| {
            bucket.iter().map(move |e| PoolRecord {
                surface: e.surface.clone(),
                category: cat.clone(),
                frequency: e.frequency,
            })
        })
    }
}

pub(crate) fn sort_bucket(bucket: &mut [PoolEntry]) {
    bucket.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| a.surface.cmp(&b.surface))
    });
}

// =============================================================================
// Groups and scenarios
// =============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Top,
    Mid,
    Bot,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Top, Group::Mid, Group::Bot];
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Top => "Top",
            Group::Mid => "Mid",
            Group::Bot => "Bot",
        })
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "top" => Ok(Group::Top),
            "mid" => Ok(Group::Mid),
            "bot" => Ok(Group::Bot),
            other => Err(Error::InvalidConfig(format!(
                "unknown group `{other}` (expected top, mid or bot)"
            ))),
        }
    }
}

/// Rank-fraction boundaries of the candidate groups. A candidate of rank `r`
/// (1-based) out of `N` falls in the group whose half-open interval
/// `(lo, hi]` contains `r / N`; ranks with `r / N <= exclude_top` are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupBoundaries {
    pub exclude_top: f64,
    pub top_end: f64,
    pub mid_end: f64,
}

impl Default for GroupBoundaries {
    fn default() -> Self {
        GroupBoundaries {
            exclude_top: 0.02,
            top_end: 0.25,
            mid_end: 0.75,
        }
    }
}

impl GroupBoundaries {
    pub fn new(exclude_top: f64, top_end: f64, mid_end: f64) -> Result<Self> {
        let b = GroupBoundaries {
            exclude_top,
            top_end,
            mid_end,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.exclude_top
            && self.exclude_top < self.top_end
            && self.top_end < self.mid_end
            && self.mid_end < 1.0
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "group boundaries must satisfy 0 < {} < {} < {} < 1",
                self.exclude_top, self.top_end, self.mid_end
            )))
        }
    }

    pub fn interval(&self, group: Group) -> (f64, f64) {
        match group {
            Group::Top => (self.exclude_top, self.top_end),
            Group::Mid => (self.top_end, self.mid_end),
            Group::Bot => (self.mid_end, 1.0),
        }
    }

    /// Group of the 1-based `rank` among `n` candidates, `None` when excluded.
    pub fn classify(&self, rank: usize, n: usize) -> Option<Group> {
        let r = rank as f64 / n as f64;
        Group::ALL.into_iter().find(|&g| {
            let (lo, hi) = self.interval(g);
            lo < r && r <= hi
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    #[serde(default)]
    pub boundaries: GroupBoundaries,
    pub group: Group,
}

impl GroupSpec {
    pub fn new(group: Group) -> Self {
        GroupSpec {
            boundaries: GroupBoundaries::default(),
            group,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Unconditional likelihood under the null document.
    S1,
    /// As `S1`, conditioned on the entity-masked summary instead.
    S1Masked,
    /// Conditional likelihood difference between original and counterfactual.
    S2,
}

impl Scenario {
    /// Range of the validation score.
    pub fn score_range(&self) -> (f64, f64) {
        match self {
            Scenario::S1 | Scenario::S1Masked => (0.0, 1.0),
            Scenario::S2 => (-1.0, 1.0),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::S1 => "S1",
            Scenario::S1Masked => "S1-masked",
            Scenario::S2 => "S2",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "s1" => Ok(Scenario::S1),
            "s1_masked" => Ok(Scenario::S1Masked),
            "s2" => Ok(Scenario::S2),
            other => Err(Error::InvalidConfig(format!(
                "unknown scenario `{other}` (expected s1, s1_masked or s2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub scenario: Scenario,
    pub threshold: f64,
    #[serde(default = "default_null_document")]
    pub null_document: String,
    #[serde(default = "default_mask_token")]
    pub mask_token: String,
}

fn default_null_document() -> String {
    ".".into()
}

fn default_mask_token() -> String {
    "[MASK]".into()
}

impl ValidationConfig {
    pub fn new(scenario: Scenario, threshold: f64) -> Result<Self> {
        let cfg = ValidationConfig {
            scenario,
            threshold,
            null_document: default_null_document(),
            mask_token: default_mask_token(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scenario.score_range();
        if !(lo..=hi).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside [{lo}, {hi}] for {}",
                self.threshold, self.scenario
            )));
        }
        Ok(())
    }
}

// =============================================================================
// Counterfactual samples
// =============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSample {
    pub source_id: String,
    pub counterfactual_document: String,
    pub counterfactual_summary: String,
    pub original_entity: EntityMention,
    pub counterfactual_surface: String,
    pub counterfactual_first_token_pos: usize,
    pub group: Group,
    pub scenario: Scenario,
    pub validation_score: f64,
    pub rng_seed: u64,
}

impl CounterfactualSample {
    /// Checks the text-level invariants: no standalone occurrence of the
    /// original surface in the counterfactual document and at least one
    /// occurrence of the counterfactual surface in the counterfactual summary.
    pub fn check_invariants(&self) -> Result<()> {
        let original = &self.original_entity.surface;
        if crate::text::contains_standalone(&self.counterfactual_document, original) {
            return Err(Error::DegenerateReplacement {
                original: original.clone(),
                counterfactual: self.counterfactual_surface.clone(),
            });
        }
        if !crate::text::contains_standalone(
            &self.counterfactual_summary,
            &self.counterfactual_surface,
        ) {
            return Err(Error::EntityNotFound {
                surface: self.counterfactual_surface.clone(),
                field: "counterfactual summary".into(),
            });
        }
        Ok(())
    }
}

/// Identifies an evaluation set, e.g. `xsum (pegasus, Top, S1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSetId {
    pub scorer: String,
    pub dataset: String,
    pub group: Group,
    pub scenario: Scenario,
}

impl fmt::Display for EvalSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}, {}, {})",
            self.dataset, self.scorer, self.group, self.scenario
        )
    }
}

// =============================================================================
// Metrics reports
// =============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_cl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_fc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaced: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when `n == 1`.
    pub std: f64,
    pub n: usize,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Option<Stats> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stats { mean, std, n })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub m_cl: Option<Stats>,
    pub m_fc: Option<Stats>,
    pub replacement_rate: Option<Stats>,
}

impl AggregateMetrics {
    pub fn from_samples(per_sample: &[SampleMetrics]) -> Self {
        let collect = |f: &dyn Fn(&SampleMetrics) -> Option<f64>| -> Vec<f64> {
            per_sample.iter().filter_map(f).collect()
        };
        AggregateMetrics {
            m_cl: Stats::from_values(&collect(&|s| s.m_cl)),
            m_fc: Stats::from_values(&collect(&|s| s.m_fc)),
            replacement_rate: Stats::from_values(&collect(&|s| {
                s.replaced.map(|r| if r { 1.0 } else { 0.0 })
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset: String,
    pub scorer: String,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub group: Option<Group>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub single_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub per_sample: Vec<SampleMetrics>,
    pub aggregate: AggregateMetrics,
    /// Samples whose adapters failed and were left out.
    #[serde(default)]
    pub skipped: usize,
}

impl MetricsReport {
    pub fn from_samples(
        metadata: ReportMetadata,
        per_sample: Vec<SampleMetrics>,
        skipped: usize,
    ) -> Self {
        let aggregate = AggregateMetrics::from_samples(&per_sample);
        MetricsReport {
            schema_version: SCHEMA_VERSION,
            metadata,
            per_sample,
            aggregate,
            skipped,
        }
    }
}
