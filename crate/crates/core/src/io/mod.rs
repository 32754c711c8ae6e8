//! Files on disk: JSONL datasets and artifacts, run manifests, and the
//! likelihood cache.
//!
//! Every JSONL record written here carries a `schema_version` key. Outputs
//! are written to a temporary sibling and renamed into place.

mod cache;
mod manifest;

pub use cache::{CacheEntry, CachedScorer, ScoreCache, CACHE_ENV};
pub use manifest::{manifest_path, FileDigest, RunManifest};

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{validate_record, CandidatePool, Dataset, PoolRecord, SCHEMA_VERSION};

// =============================================================================
// Hashing
// =============================================================================

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = std::io::Read::read(&mut file, &mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

// =============================================================================
// JSONL
// =============================================================================

#[derive(Serialize)]
struct Versioned<'a, T> {
    schema_version: u32,
    #[serde(flatten)]
    record: &'a T,
}

/// One JSON object per line, each with `schema_version`.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(&Versioned {
            schema_version: SCHEMA_VERSION,
            record,
        })?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `contents` to a temporary sibling, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = tmp_path(path);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(contents)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(records)?.as_bytes())
}

/// Non-blank lines as `(1-based line number, JSON object)`. A
/// `schema_version` key is checked and stripped.
pub fn read_json_lines(path: &Path) -> Result<Vec<(usize, serde_json::Value)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::ParseError {
                line: line_no,
                message: e.to_string(),
            })?;
        let Some(obj) = value.as_object_mut() else {
            return Err(Error::ParseError {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        if let Some(v) = obj.remove("schema_version") {
            if v.as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(Error::ParseError {
                    line: line_no,
                    message: format!("unsupported schema_version {v}"),
                });
            }
        }
        out.push((line_no, value));
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_json_lines(path)?
        .into_iter()
        .map(|(line, v)| {
            serde_json::from_value(v).map_err(|e| Error::ParseError {
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

// =============================================================================
// Datasets and pools
// =============================================================================

/// Reads a JSONL dataset (`id`, `document`, `summary`, optional `split`).
/// The dataset is named after the file stem.
pub fn ingest_dataset(path: &Path) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (line, raw) in read_json_lines(path)? {
        let sample = validate_record(&raw, Some(line))?;
        if let Some(&earlier) = first_line.get(&sample.id) {
            return Err(Error::DuplicateId {
                id: sample.id,
                lines: vec![earlier, line],
            });
        }
        first_line.insert(sample.id.clone(), line);
        samples.push(sample);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, samples)
}

pub fn read_pool(path: &Path) -> Result<CandidatePool> {
    CandidatePool::from_records(read_jsonl::<PoolRecord>(path)?)
}

pub fn write_pool(path: &Path, pool: &CandidatePool) -> Result<()> {
    write_jsonl(path, &pool.records().collect::<Vec<_>>())
}
