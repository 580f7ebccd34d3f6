//! Stage orchestration with file-based handoffs.
//!
//! Every stage owns one directory under the output root and records a
//! `pipeline.json` manifest there: inputs, outputs, record counts, a hash
//! of the configuration that produced them and a completion marker. A
//! stage refuses to run until its predecessor is complete and skips work
//! when it already completed under the same configuration hash. Hashes
//! chain through predecessors, so upstream changes invalidate downstream
//! markers.

mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::cdx::{LiveBackend, DEFAULT_ARCHIVE_BASE};
use crate::archive::replay::ReplayBackend;
use crate::archive::{ArchiveBackend, ArchiveClient, Clock, FetchPolicy, ManualClock, SystemClock};
use crate::providers::{load_registry, ProviderRegistry};

pub use stages::*;

pub const MANIFEST_FILE: &str = "pipeline.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub stage: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config_hash: String,
    pub counts: BTreeMap<String, u64>,
    pub complete: bool,
}

impl PipelineManifest {
    pub fn load(dir: &Path) -> io::Result<Option<Self>> {
        match fs::read_to_string(dir.join(MANIFEST_FILE)) {
            Ok(text) => {
                serde_json::from_str(&text).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn store(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        let tmp = dir.join(format!("{MANIFEST_FILE}.partial"));
        fs::write(&tmp, text)?;
        fs::rename(tmp, dir.join(MANIFEST_FILE))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    /// Bad invocation or missing prerequisite; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// The stage ran and failed; exit status 1.
    #[error("{0}")]
    Failed(String),
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::Usage(_) => 2,
            StageError::Failed(_) => 1,
        }
    }

    pub(crate) fn failed(context: &str, err: impl std::fmt::Display) -> Self {
        StageError::Failed(format!("{context}: {err}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ArchiveSource {
    Live(String),
    Replay(PathBuf),
}

impl Default for ArchiveSource {
    fn default() -> Self {
        ArchiveSource::Live(DEFAULT_ARCHIVE_BASE.to_string())
    }
}

impl ArchiveSource {
    /// Base used when rendering Wayback URLs.
    pub fn wayback_base(&self) -> &str {
        match self {
            ArchiveSource::Live(base) => base,
            ArchiveSource::Replay(_) => DEFAULT_ARCHIVE_BASE,
        }
    }
}

/// Shared settings of one invocation.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub out: PathBuf,
    pub registry_path: Option<PathBuf>,
    pub archive: ArchiveSource,
    pub workers: usize,
    pub policy: FetchPolicy,
}

/// What a stage did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: String,
    pub skipped: bool,
    pub counts: BTreeMap<String, u64>,
}

pub(crate) enum Begin {
    UpToDate(PipelineManifest),
    Run(String),
}

/// Ties a stage name to its directory name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub name: &'static str,
    pub dir: &'static str,
}

pub const PROVIDERS_FUSE: Stage = Stage { name: "providers fuse", dir: "providers" };
pub const CAPTURES_FETCH: Stage = Stage { name: "captures fetch", dir: "captures" };
pub const CAPTURES_FILTER: Stage = Stage { name: "captures filter", dir: "filtered" };
pub const QUERIES_EXTRACT: Stage = Stage { name: "queries extract", dir: "queries" };
pub const QUERIES_DEDUP: Stage = Stage { name: "queries dedup", dir: "unique" };
pub const SERPS_PLAN: Stage = Stage { name: "serps plan", dir: "plan" };
pub const SERPS_DOWNLOAD: Stage = Stage { name: "serps download", dir: "serps" };
pub const SERPS_PARSE: Stage = Stage { name: "serps parse", dir: "parsed" };
pub const CORPUS_BUILD: Stage = Stage { name: "corpus build", dir: "corpus" };

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Pipeline {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            registry_path: None,
            archive: ArchiveSource::default(),
            workers: 4,
            policy: FetchPolicy::default(),
        }
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.dir)
    }

    pub fn registry(&self) -> Result<ProviderRegistry, StageError> {
        let path =
            self.registry_path.as_ref().ok_or_else(|| StageError::Usage("this command needs --registry".into()))?;
        if !path.exists() {
            return Err(StageError::Usage(format!("registry {} does not exist", path.display())));
        }
        load_registry(path).map_err(|e| StageError::Failed(e.to_string()))
    }

    /// Hash of the registry file contents, part of dependent config hashes.
    pub(crate) fn registry_hash(&self) -> Result<String, StageError> {
        let path =
            self.registry_path.as_ref().ok_or_else(|| StageError::Usage("this command needs --registry".into()))?;
        let bytes = fs::read(path).map_err(|e| StageError::Usage(format!("registry {}: {e}", path.display())))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn client(&self) -> Result<ArchiveClient, StageError> {
        let (backend, clock): (Arc<dyn ArchiveBackend>, Arc<dyn Clock>) = match &self.archive {
            ArchiveSource::Live(base) => (Arc::new(LiveBackend::new(base)), Arc::new(SystemClock::default())),
            ArchiveSource::Replay(dir) => {
                if !dir.join(crate::archive::replay::MANIFEST_FILE).exists() {
                    return Err(StageError::Usage(format!(
                        "replay directory {} has no {}",
                        dir.display(),
                        crate::archive::replay::MANIFEST_FILE
                    )));
                }
                // Replays run on virtual time: backoff and rate-limit waits
                // advance the clock instead of sleeping.
                let clock: Arc<dyn Clock> = Arc::new(ManualClock::new());
                let backend = ReplayBackend::open(dir, clock.clone()).map_err(|e| StageError::failed("replay", e))?;
                (Arc::new(backend), clock)
            }
        };
        self.policy.validate().map_err(|e| StageError::Usage(e.to_string()))?;
        Ok(ArchiveClient::new(backend, self.policy.clone(), clock))
    }

    /// Manifest of a completed predecessor, or a usage error naming it.
    pub fn require(&self, stage: Stage) -> Result<PipelineManifest, StageError> {
        let dir = self.stage_dir(stage);
        match PipelineManifest::load(&dir) {
            Ok(Some(m)) if m.complete => Ok(m),
            Ok(Some(_)) => Err(StageError::Usage(format!(
                "stage `{}` has not completed (run `aql {}` first)",
                stage.name, stage.name
            ))),
            Ok(None) => Err(StageError::Usage(format!(
                "missing input from stage `{}`: no {} in {} (run `aql {}` first)",
                stage.name,
                MANIFEST_FILE,
                dir.display(),
                stage.name
            ))),
            Err(e) => Err(StageError::Failed(format!("{}: {e}", dir.join(MANIFEST_FILE).display()))),
        }
    }

    pub(crate) fn begin(
        &self,
        stage_name: &str,
        dir: &Path,
        config: &serde_json::Value,
        upstream: &[&PipelineManifest],
    ) -> Result<Begin, StageError> {
        let mut material = format!("{stage_name}\n{config}\n");
        for m in upstream {
            material.push_str(&m.config_hash);
            material.push('\n');
        }
        let hash = sha256_hex(material.as_bytes());
        match PipelineManifest::load(dir) {
            Ok(Some(m)) if m.complete && m.config_hash == hash => return Ok(Begin::UpToDate(m)),
            Ok(_) => {}
            Err(e) => return Err(StageError::Failed(format!("{}: {e}", dir.display()))),
        }
        let pending = PipelineManifest {
            stage: stage_name.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config_hash: hash.clone(),
            counts: BTreeMap::new(),
            complete: false,
        };
        pending.store(dir).map_err(|e| StageError::failed("writing manifest", e))?;
        Ok(Begin::Run(hash))
    }

    pub(crate) fn complete(
        &self,
        stage_name: &str,
        dir: &Path,
        hash: String,
        inputs: Vec<String>,
        outputs: Vec<String>,
        counts: BTreeMap<String, u64>,
    ) -> Result<StageReport, StageError> {
        let manifest = PipelineManifest {
            stage: stage_name.to_string(),
            inputs,
            outputs,
            config_hash: hash,
            counts: counts.clone(),
            complete: true,
        };
        manifest.store(dir).map_err(|e| StageError::failed("writing manifest", e))?;
        tracing::info!(stage = stage_name, counts = ?counts, "stage complete");
        Ok(StageReport { stage: stage_name.to_string(), skipped: false, counts })
    }
}

pub(crate) fn skipped(manifest: PipelineManifest) -> StageReport {
    tracing::info!(stage = %manifest.stage, "stage up to date");
    StageReport { stage: manifest.stage, skipped: true, counts: manifest.counts }
}

impl Pipeline {
    /// Paths recorded in manifests are relative to the output root, so a
    /// finished tree can be moved or compared across runs.
    pub(crate) fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.out).unwrap_or(path).display().to_string()
    }
}
