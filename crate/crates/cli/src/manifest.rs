use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tribaker::classical::Family;

use crate::cache::{sha256_hex, CacheStatus};
use crate::config::RunConfig;
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

/// Solver diagnostics for one member.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub family: Family,
    pub l: usize,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<CacheStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_residual_max: Option<f64>,
    pub excluded: Vec<usize>,
}

impl Diagnostics {
    pub fn new(family: Family, l: usize, k: usize, cache: Option<CacheStatus>) -> Self {
        Self {
            family,
            l,
            k,
            cache,
            residual_max: None,
            condition: None,
            left_residual_max: None,
            excluded: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub created_unix: u64,
    pub config: RunConfig,
    pub outputs: Vec<OutputEntry>,
    pub diagnostics: Vec<Diagnostics>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Files written into one output directory, with their checksums.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8], metadata: Option<serde_json::Value>) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.entries.push(OutputEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            metadata,
        });
        Ok(())
    }

    pub fn entries(&self) -> &[OutputEntry] {
        &self.entries
    }

    /// Write `manifest.json` listing every file emitted so far.
    pub fn finish(self, config: &RunConfig, diagnostics: Vec<Diagnostics>) -> Result<RunManifest> {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let manifest = RunManifest {
            tool: "tribaker",
            version: env!("CARGO_PKG_VERSION"),
            created_unix,
            config: config.clone(),
            outputs: self.entries,
            diagnostics,
        };
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        fs::write(self.dir.join(MANIFEST_NAME), text)?;
        Ok(manifest)
    }
}
