//! Persistent likelihood cache.
//!
//! Keys are `(scorer id, SHA-256 of the document bytes, SHA-256 of the JSON
//! encoding of the prefix tokens, candidate token)`. New entries are
//! appended to a JSONL file as they are computed; reads take a shared lock.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{read_jsonl, sha256_hex};
use crate::adapters::LikelihoodScorer;
use crate::error::Result;

/// Environment variable naming the default cache file.
pub const CACHE_ENV: &str = "FACTADAPT_CACHE";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
struct CacheKey {
    scorer: String,
    document_sha256: String,
    prefix_sha256: String,
    token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub scorer: String,
    pub document_sha256: String,
    pub prefix_sha256: String,
    pub token: String,
    pub probability: f64,
}

pub struct ScoreCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<CacheKey, f64>>,
    writer: Mutex<Option<BufWriter<File>>>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        ScoreCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for e in read_jsonl::<CacheEntry>(path)? {
                entries.insert(
                    CacheKey {
                        scorer: e.scorer,
                        document_sha256: e.document_sha256,
                        prefix_sha256: e.prefix_sha256,
                        token: e.token,
                    },
                    e.probability,
                );
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ScoreCache {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(scorer: &str, document: &str, prefix: &[String], token: &str) -> CacheKey {
        let prefix_json = serde_json::to_vec(prefix).expect("strings serialize");
        CacheKey {
            scorer: scorer.to_string(),
            document_sha256: sha256_hex(document.as_bytes()),
            prefix_sha256: sha256_hex(&prefix_json),
            token: token.to_string(),
        }
    }

    pub fn get(&self, scorer: &str, document: &str, prefix: &[String], token: &str) -> Option<f64> {
        let key = Self::key(scorer, document, prefix, token);
        self.entries.read().expect("cache lock").get(&key).copied()
    }

    pub fn insert(
        &self,
        scorer: &str,
        document: &str,
        prefix: &[String],
        token: &str,
        probability: f64,
    ) -> Result<()> {
        let key = Self::key(scorer, document, prefix, token);
        {
            let mut entries = self.entries.write().expect("cache lock");
            if entries.contains_key(&key) {
                return Ok(());
            }
            entries.insert(key.clone(), probability);
        }
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(w) = writer.as_mut() {
            let entry = CacheEntry {
                scorer: key.scorer,
                document_sha256: key.document_sha256,
                prefix_sha256: key.prefix_sha256,
                token: key.token,
                probability,
            };
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn flush(&self) -> Result<()> {
        if let Some(w) = self.writer.lock().expect("cache writer lock").as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

impl Drop for ScoreCache {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::warn!("could not flush likelihood cache: {e}");
        }
    }
}

/// A scorer that consults a [`ScoreCache`] before calling through.
pub struct CachedScorer {
    inner: Arc<dyn LikelihoodScorer>,
    cache: Arc<ScoreCache>,
}

impl CachedScorer {
    pub fn new(inner: Arc<dyn LikelihoodScorer>, cache: Arc<ScoreCache>) -> Self {
        CachedScorer { inner, cache }
    }
}

impl LikelihoodScorer for CachedScorer {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn first_token_likelihood(
        &self,
        document: &str,
        prefix: &[String],
        candidate_token: &str,
    ) -> Result<f64> {
        let id = self.inner.id();
        if let Some(p) = self.cache.get(id, document, prefix, candidate_token) {
            return Ok(p);
        }
        let p = self.inner.first_token_likelihood(document, prefix, candidate_token)?;
        self.cache.insert(id, document, prefix, candidate_token, p)?;
        Ok(p)
    }

    fn is_concurrent(&self) -> bool {
        self.inner.is_concurrent()
    }
}
