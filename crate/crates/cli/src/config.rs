//! TOML run configuration and the adapters it names.
//!
//! ```toml
//! tokenizer = "wordpunct"
//!
//! [construction]
//! scenario = "s2"
//! group = "mid"
//! threshold = 0.7
//! seed = 1
//!
//! [scorer]
//! kind = "table"
//! path = "scorer.json"
//!
//! [ner]
//! path = "ner.json"
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use factadapt_core::adapters::{
    table_scorer_from_config, HashScorer, NerConfig, RegexNer, TableScorerConfig,
    WhitespaceTokenizer, WordPunctTokenizer,
};
use factadapt_core::model::{Group, GroupBoundaries, Scenario};
use factadapt_core::pool::{default_excluded_categories, PoolFields};
use factadapt_core::{LikelihoodScorer, Tokenizer};

/// A configuration problem; the CLI exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub tokenizer: TokenizerKind,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub construction: ConstructionSection,
    #[serde(default)]
    pub pool: PoolSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub augmentation: AugmentationSection,
    #[serde(default)]
    pub scorer: Option<ScorerSpec>,
    #[serde(default)]
    pub ner: Option<NerSpec>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Whitespace,
    #[default]
    Wordpunct,
}

impl TokenizerKind {
    pub fn build(self) -> Box<dyn Tokenizer> {
        match self {
            TokenizerKind::Whitespace => Box::new(WhitespaceTokenizer),
            TokenizerKind::Wordpunct => Box::new(WordPunctTokenizer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionSection {
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    #[serde(default = "default_group")]
    pub group: Group,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub fan_out: usize,
    #[serde(default)]
    pub max_per_sample: Option<usize>,
    #[serde(default = "default_excluded")]
    pub excluded_categories: BTreeSet<String>,
    #[serde(default)]
    pub boundaries: GroupBoundaries,
    #[serde(default = "default_null_document")]
    pub null_document: String,
    #[serde(default = "default_mask_token")]
    pub mask_token: String,
    #[serde(default = "two")]
    pub min_word_len: usize,
}

fn default_scenario() -> Scenario {
    Scenario::S1
}

fn default_group() -> Group {
    Group::Top
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn default_excluded() -> BTreeSet<String> {
    default_excluded_categories().into_iter().collect()
}

fn default_null_document() -> String {
    ".".into()
}

fn default_mask_token() -> String {
    "[MASK]".into()
}

impl Default for ConstructionSection {
    fn default() -> Self {
        ConstructionSection {
            scenario: default_scenario(),
            group: default_group(),
            threshold: 0.0,
            seed: 0,
            fan_out: 1,
            max_per_sample: None,
            excluded_categories: default_excluded(),
            boundaries: GroupBoundaries::default(),
            null_document: default_null_document(),
            mask_token: default_mask_token(),
            min_word_len: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    #[serde(default)]
    pub fields: PoolFields,
    #[serde(default = "one_u64")]
    pub min_frequency: u64,
}

fn one_u64() -> u64 {
    1
}

impl Default for PoolSection {
    fn default() -> Self {
        PoolSection {
            fields: PoolFields::Both,
            min_frequency: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    #[serde(default = "default_target")]
    pub target: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_target() -> f64 {
    0.10
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_step() -> f64 {
    0.05
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            target: default_target(),
            tolerance: default_tolerance(),
            step: default_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSection {
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "one")]
    pub negatives_per_sample: usize,
    #[serde(default)]
    pub construction_seed: u64,
}

fn default_ratio() -> f64 {
    0.1
}

impl Default for AugmentationSection {
    fn default() -> Self {
        AugmentationSection {
            ratio: default_ratio(),
            negatives_per_sample: 1,
            construction_seed: 0,
        }
    }
}

/// Which likelihood scorer to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScorerSpec {
    /// Lookup table, inline or from a JSON file.
    Table {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        table: Option<TableScorerConfig>,
    },
    /// Deterministic pseudo-random probabilities.
    Hash {
        #[serde(default = "default_hash_id")]
        id: String,
        #[serde(default)]
        seed: u64,
    },
    /// JSON-over-HTTP model server.
    Remote {
        id: String,
        url: String,
        #[serde(default)]
        timeout_ms: Option<u64>,
        #[serde(default)]
        retries: Option<u32>,
    },
}

fn default_hash_id() -> String {
    "hash".into()
}

impl ScorerSpec {
    /// Reads a scorer spec from a JSON file. A bare table config (no `kind`)
    /// is accepted as a table scorer.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading scorer spec {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("scorer spec {}: {e}", path.display())))?;
        if value.get("kind").is_none() {
            let table: TableScorerConfig = serde_json::from_value(value)
                .map_err(|e| config_error(format!("scorer table {}: {e}", path.display())))?;
            return Ok(ScorerSpec::Table {
                path: None,
                table: Some(table),
            });
        }
        let mut spec: ScorerSpec = serde_json::from_value(value)
            .map_err(|e| config_error(format!("scorer spec {}: {e}", path.display())))?;
        if let ScorerSpec::Table { path: Some(p), .. } = &mut spec {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn build(&self) -> anyhow::Result<Arc<dyn LikelihoodScorer>> {
        match self {
            ScorerSpec::Table { table: Some(t), .. } => {
                Ok(Arc::new(table_scorer_from_config(t).map_err(|e| config_error(e.to_string()))?))
            }
            ScorerSpec::Table { path: Some(p), .. } => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading scorer table {}", p.display()))?;
                let t: TableScorerConfig = serde_json::from_str(&text)
                    .map_err(|e| config_error(format!("scorer table {}: {e}", p.display())))?;
                Ok(Arc::new(table_scorer_from_config(&t).map_err(|e| config_error(e.to_string()))?))
            }
            ScorerSpec::Table { .. } => Err(config_error("table scorer needs `path` or `table`")),
            ScorerSpec::Hash { id, seed } => Ok(Arc::new(HashScorer::new(id.clone(), *seed))),
            ScorerSpec::Remote {
                id,
                url,
                timeout_ms,
                retries,
            } => build_remote(id, url, *timeout_ms, *retries),
        }
    }
}

#[cfg(feature = "remote")]
fn build_remote(
    id: &str,
    url: &str,
    timeout_ms: Option<u64>,
    retries: Option<u32>,
) -> anyhow::Result<Arc<dyn LikelihoodScorer>> {
    use factadapt_core::adapters::{RemoteScorer, RemoteScorerConfig};
    Ok(Arc::new(RemoteScorer::new(RemoteScorerConfig {
        id: id.to_string(),
        url: url.to_string(),
        timeout_ms: timeout_ms.unwrap_or(30_000),
        retries: retries.unwrap_or(2),
    })))
}

#[cfg(not(feature = "remote"))]
fn build_remote(
    _id: &str,
    _url: &str,
    _timeout_ms: Option<u64>,
    _retries: Option<u32>,
) -> anyhow::Result<Arc<dyn LikelihoodScorer>> {
    Err(config_error("this build has no remote scorer support"))
}

/// Regex/gazetteer recognizer, inline or from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(flatten)]
    pub inline: NerConfig,
}

impl NerSpec {
    pub fn from_file(path: &Path) -> NerSpec {
        NerSpec {
            path: Some(path.to_path_buf()),
            inline: NerConfig::default(),
        }
    }

    pub fn build(&self) -> anyhow::Result<RegexNer> {
        let config = match &self.path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading NER config {}", p.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| config_error(format!("NER config {}: {e}", p.display())))?
            }
            None => self.inline.clone(),
        };
        RegexNer::from_config(&config).map_err(|e| config_error(e.to_string()))
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("reading config {}: {e}", path.display())))?;
        let mut config: Config = toml::from_str(&text)
            .map_err(|e| config_error(format!("config {}: {e}", path.display())))?;
        // paths inside the config are relative to it
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(ScorerSpec::Table { path: Some(p), .. }) = &mut config.scorer {
            rebase(p);
        }
        if let Some(NerSpec { path: Some(p), .. }) = &mut config.ner {
            rebase(p);
        }
        if let Some(p) = &mut config.cache {
            rebase(p);
        }
        Ok(config)
    }
}
