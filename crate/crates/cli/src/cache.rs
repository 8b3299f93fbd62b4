//! On-disk cache of open-map operators.
//!
//! Entries live under `<root>/v<crate version>-f<format version>/` and are keyed
//! by `(family, l, k)`. Each operator file has a `.sha256` sidecar. An entry
//! whose checksum or contents do not verify is recomputed and rewritten, and
//! entries written by other versions are never looked at.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tribaker::classical::OpeningSpec;
use tribaker::quantum::{open_map, ComplexOperator, OperatorTag, FORMAT_VERSION};

use crate::Result;

pub const CACHE_ENV: &str = "TRIBAKER_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheStatus {
    Disabled,
    Hit,
    Miss,
    /// A stored entry failed verification and was replaced.
    Recomputed,
}

#[derive(Debug, Clone)]
pub struct OperatorCache {
    dir: Option<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn default_root() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(dir).join("tribaker");
    }
    if let Some(home) = std::env::var_os("HOME") {
        return PathBuf::from(home).join(".cache").join("tribaker");
    }
    std::env::temp_dir().join("tribaker-cache")
}

/// Write through a temporary file so a concurrent reader never sees a partial entry.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl OperatorCache {
    /// Cache rooted at `$TRIBAKER_CACHE_DIR`, else the user cache directory.
    pub fn from_env(enabled: bool) -> Self {
        Self::at(default_root(), enabled)
    }

    pub fn at(root: impl Into<PathBuf>, enabled: bool) -> Self {
        let version = format!("v{}-f{}", env!("CARGO_PKG_VERSION"), FORMAT_VERSION);
        Self {
            dir: enabled.then(|| root.into().join(version)),
        }
    }

    pub fn disabled() -> Self {
        Self { dir: None }
    }

    pub fn entry_path(&self, spec: &OpeningSpec) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| {
            d.join(format!("{}_l{}_k{}.tbop", spec.family(), spec.l(), spec.k()))
        })
    }

    fn load(path: &Path, spec: &OpeningSpec) -> Option<ComplexOperator> {
        let bytes = fs::read(path).ok()?;
        let recorded = fs::read_to_string(path.with_extension("tbop.sha256")).ok()?;
        if recorded.trim() != sha256_hex(&bytes) {
            return None;
        }
        let op = ComplexOperator::read_binary(bytes.as_slice()).ok()?;
        (op.tag() == OperatorTag::OpenMap && op.dim() == 3usize.pow(spec.l() as u32)).then_some(op)
    }

    /// The open map for `spec`, from the cache when a verified entry exists.
    pub fn open_map(&self, spec: &OpeningSpec) -> Result<(ComplexOperator, CacheStatus)> {
        let Some(path) = self.entry_path(spec) else {
            return Ok((open_map(spec)?, CacheStatus::Disabled));
        };
        let existed = path.exists();
        if existed {
            if let Some(op) = Self::load(&path, spec) {
                return Ok((op, CacheStatus::Hit));
            }
        }
        let op = open_map(spec)?;
        let mut bytes = Vec::new();
        op.write_binary(&mut bytes)?;
        fs::create_dir_all(path.parent().expect("entry has a parent"))?;
        write_atomic(&path, &bytes)?;
        write_atomic(&path.with_extension("tbop.sha256"), sha256_hex(&bytes).as_bytes())?;
        let status = if existed { CacheStatus::Recomputed } else { CacheStatus::Miss };
        Ok((op, status))
    }
}
