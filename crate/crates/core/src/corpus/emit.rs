//! Sharded, gzip-compressed JSONL corpus files plus a checksum manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::{Compression, GzBuilder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{QueryRecord, ResultRecord};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    /// Relative to the corpus directory, `/`-separated.
    pub path: String,
    pub provider: String,
    pub records: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub queries: Vec<ShardEntry>,
    pub results: Vec<ShardEntry>,
}

impl CorpusManifest {
    pub fn load(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn total_queries(&self) -> u64 {
        self.queries.iter().map(|s| s.records).sum()
    }

    pub fn total_results(&self) -> u64 {
        self.results.iter().map(|s| s.records).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("providers {0:?} and {1:?} map to the same shard name")]
    SlugCollision(String, String),
    #[error("writing {path} (last complete shard: {last_durable:?}): {source}")]
    Io {
        path: PathBuf,
        last_durable: Option<String>,
        #[source]
        source: io::Error,
    },
}

/// Lowercase ASCII alphanumerics; every other run becomes one `-`.
pub fn provider_slug(name: &str) -> String {
    let mut slug = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.is_empty() && !slug.ends_with('-') {
            slug.push('-');
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    if slug.is_empty() {
        slug.push_str("provider");
    }
    slug
}

fn shard_by_provider<'a, T>(
    records: &'a [T],
    provider: impl Fn(&T) -> &str,
) -> Result<BTreeMap<String, (String, Vec<&'a T>)>, EmitError> {
    let mut shards: BTreeMap<String, (String, Vec<&T>)> = BTreeMap::new();
    for record in records {
        let name = provider(record);
        let entry = shards.entry(provider_slug(name)).or_insert_with(|| (name.to_string(), Vec::new()));
        if entry.0 != name {
            return Err(EmitError::SlugCollision(entry.0.clone(), name.to_string()));
        }
        entry.1.push(record);
    }
    Ok(shards)
}

fn write_shard<T: Serialize>(path: &Path, records: &[&T]) -> io::Result<String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("gz.partial");
    {
        let file = BufWriter::new(File::create(&tmp)?);
        let mut gz = GzBuilder::new().mtime(0).write(file, Compression::default());
        for record in records {
            serde_json::to_writer(&mut gz, record)?;
            gz.write_all(b"\n")?;
        }
        gz.finish()?.flush()?;
    }
    fs::rename(&tmp, path)?;
    let bytes = fs::read(path)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `queries/<slug>.jsonl.gz`, `results/<slug>.jsonl.gz` and
/// `manifest.json`. Records keep their input order within a shard; the
/// output is byte-identical for identical input.
pub fn emit_corpus(
    queries: &[QueryRecord],
    results: &[ResultRecord],
    out_dir: &Path,
) -> Result<CorpusManifest, EmitError> {
    let mut manifest = CorpusManifest::default();
    let mut last_durable: Option<String> = None;
    let query_shards = shard_by_provider(queries, |q| &q.provider)?;
    let result_shards = shard_by_provider(results, |r| &r.provider)?;

    macro_rules! emit {
        ($kind:literal, $shards:expr, $into:expr) => {
            for (slug, (provider, records)) in $shards {
                let rel = format!("{}/{slug}.jsonl.gz", $kind);
                let path = out_dir.join(&rel);
                let sha256 = write_shard(&path, &records).map_err(|source| EmitError::Io {
                    path: path.clone(),
                    last_durable: last_durable.clone(),
                    source,
                })?;
                $into.push(ShardEntry { path: rel.clone(), provider, records: records.len() as u64, sha256 });
                last_durable = Some(rel);
            }
        };
    }
    emit!("queries", query_shards, manifest.queries);
    emit!("results", result_shards, manifest.results);

    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|source| EmitError::Io { path, last_durable, source })?;
    Ok(manifest)
}
