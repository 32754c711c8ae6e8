//! Run manifests: what was run, on which inputs, producing which outputs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{sha256_file, write_atomic};
use crate::error::Result;
use crate::model::{EvalSetId, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Effective configuration after flag overrides.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub scorer_ids: Vec<String>,
    pub seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_set: Option<EvalSetId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_set_name: Option<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// `<output>.manifest.json`, next to the output.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            config,
            inputs: Vec::new(),
            scorer_ids: Vec::new(),
            seeds: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0,
            outputs: Vec::new(),
            eval_set: None,
            eval_set_name: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn with_eval_set(mut self, id: EvalSetId) -> Self {
        self.eval_set_name = Some(id.to_string());
        self.eval_set = Some(id);
        self
    }

    /// Writes one manifest next to every output, atomically.
    pub fn write(&mut self) -> Result<Vec<PathBuf>> {
        self.finished_unix = unix_now();
        let body = serde_json::to_string_pretty(self)? + "\n";
        let mut written = Vec::new();
        for out in &self.outputs {
            let p = manifest_path(Path::new(&out.path));
            write_atomic(&p, body.as_bytes())?;
            written.push(p);
        }
        Ok(written)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
