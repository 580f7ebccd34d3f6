//! File-backed archive backend for offline, deterministic runs.
//!
//! A fixture directory holds `manifest.jsonl`, one capture per line:
//!
//! ```json
//! {"url":"https://e.org/s?q=a","timestamp":"20200101000000","status":200,"mime":"text/html","digest":"X","body_path":"bodies/e.org/20200101000000/<sha1>.html"}
//! ```
//!
//! `body_path` is relative to the fixture directory. `fail_times: n` makes
//! the first `n` snapshot requests for that capture fail transiently; with
//! `fail_times` but no `body_path` every request fails transiently.
//! `fail_status` replaces the simulated timeout with an HTTP status, which
//! is classified like a live response. Bodies are laid out by
//! [`ReplayFixtureBuilder`] as `bodies/<host>/<timestamp>/<sha1(url)>.html`.
//!
//! Every request is appended to an in-memory log for assertions.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use super::clock::Clock;
use super::{ArchiveBackend, BackendError, Capture, CdxRow, SnapshotBody};
use crate::timestamp::Timestamp14;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DEFAULT_PAGE_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub url: String,
    pub timestamp: Timestamp14,
    pub status: u16,
    pub mime: String,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_times: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_status: Option<u16>,
}

impl ReplayEntry {
    pub fn capture(&self) -> Capture {
        Capture {
            url: self.url.clone(),
            timestamp: self.timestamp.clone(),
            status: self.status,
            mime: self.mime.clone(),
            digest: self.digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequestKind {
    PageCount { prefix: String },
    Page { prefix: String, page: usize },
    Snapshot { timestamp: String, url: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedRequest {
    pub at: Duration,
    pub kind: RequestKind,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

enum Line {
    Entry(ReplayEntry),
    Malformed(String),
}

pub struct ReplayBackend {
    root: PathBuf,
    lines: Vec<Line>,
    by_address: HashMap<(String, String), usize>,
    page_size: usize,
    clock: Arc<dyn Clock>,
    attempts: Mutex<HashMap<usize, u32>>,
    log: Mutex<Vec<LoggedRequest>>,
}

/// Scheme-less, `www.`-less form used for prefix matching, mirroring the
/// archive's canonicalized URL keys.
pub fn canonical_prefix_form(url: &str) -> &str {
    let rest = url.strip_prefix("https://").or_else(|| url.strip_prefix("http://")).unwrap_or(url);
    rest.strip_prefix("www.").unwrap_or(rest)
}

pub fn matches_prefix(url: &str, prefix: &str) -> bool {
    canonical_prefix_form(url).starts_with(canonical_prefix_form(prefix))
}

impl ReplayBackend {
    pub fn open(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, ReplayError> {
        let root = root.into();
        let manifest = root.join(MANIFEST_FILE);
        let file = File::open(&manifest).map_err(|source| ReplayError::Io { path: manifest.clone(), source })?;
        let mut lines = Vec::new();
        let mut by_address = HashMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| ReplayError::Io { path: manifest.clone(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ReplayEntry>(&line) {
                Ok(entry) => {
                    by_address.entry((entry.timestamp.to_string(), entry.url.clone())).or_insert(lines.len());
                    lines.push(Line::Entry(entry));
                }
                Err(_) => lines.push(Line::Malformed(line)),
            }
        }
        Ok(Self {
            root,
            lines,
            by_address,
            page_size: DEFAULT_PAGE_SIZE,
            clock,
            attempts: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> impl Iterator<Item = &ReplayEntry> {
        self.lines.iter().filter_map(|l| match l {
            Line::Entry(e) => Some(e),
            Line::Malformed(_) => None,
        })
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.log.lock().expect("log poisoned").clone()
    }

    pub fn clear_requests(&self) {
        self.log.lock().expect("log poisoned").clear();
    }

    fn record(&self, kind: RequestKind) {
        let at = self.clock.now();
        self.log.lock().expect("log poisoned").push(LoggedRequest { at, kind });
    }

    /// Malformed lines are listed under any prefix their raw text contains.
    fn matching(&self, prefix: &str) -> Vec<CdxRow> {
        self.lines
            .iter()
            .filter_map(|line| match line {
                Line::Entry(e) if matches_prefix(&e.url, prefix) => Some(Ok(e.capture())),
                Line::Malformed(raw) if raw.contains(canonical_prefix_form(prefix)) => Some(Err(raw.clone())),
                _ => None,
            })
            .collect()
    }
}

impl ArchiveBackend for ReplayBackend {
    fn host(&self) -> &str {
        "replay"
    }

    fn page_count(&self, prefix: &str) -> Result<usize, BackendError> {
        self.record(RequestKind::PageCount { prefix: prefix.to_string() });
        Ok(self.matching(prefix).len().div_ceil(self.page_size))
    }

    fn page(&self, prefix: &str, page: usize) -> Result<Vec<CdxRow>, BackendError> {
        self.record(RequestKind::Page { prefix: prefix.to_string(), page });
        Ok(self.matching(prefix).into_iter().skip(page * self.page_size).take(self.page_size).collect())
    }

    fn snapshot(&self, timestamp: &Timestamp14, url: &str) -> Result<SnapshotBody, BackendError> {
        self.record(RequestKind::Snapshot { timestamp: timestamp.to_string(), url: url.to_string() });
        let address = format!("{timestamp}/{url}");
        let Some(&idx) = self.by_address.get(&(timestamp.to_string(), url.to_string())) else {
            return Err(BackendError::Permanent { status: None, message: format!("no replay fixture for {address}") });
        };
        let Line::Entry(entry) = &self.lines[idx] else {
            unreachable!("address index only points at entries");
        };
        let seen = {
            let mut attempts = self.attempts.lock().expect("attempts poisoned");
            let n = attempts.entry(idx).or_insert(0);
            *n += 1;
            *n
        };
        let failing = match (entry.fail_times, &entry.body_path) {
            (Some(n), Some(_)) => seen <= n,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if failing {
            return Err(match entry.fail_status {
                Some(status) => BackendError::from_status(status, &address),
                None => BackendError::Transient(format!("injected timeout for {address}")),
            });
        }
        let Some(body_path) = &entry.body_path else {
            return Err(BackendError::Permanent {
                status: None,
                message: format!("replay fixture for {address} has no body"),
            });
        };
        let body = fs::read(self.root.join(body_path)).map_err(|e| BackendError::Permanent {
            status: None,
            message: format!("replay body {body_path} for {address}: {e}"),
        })?;
        Ok(SnapshotBody { body, final_url: url.to_string() })
    }
}

/// Writes a replay fixture directory.
pub struct ReplayFixtureBuilder {
    root: PathBuf,
    manifest: io::BufWriter<File>,
}

pub fn body_relative_path(capture: &Capture) -> String {
    let host =
        crate::extract::split_url(&capture.url).map(|c| c.host().to_string()).unwrap_or_else(|_| "unknown".to_string());
    let hash = hex_sha1(capture.url.as_bytes());
    format!("bodies/{host}/{}/{hash}.html", capture.timestamp)
}

fn hex_sha1(bytes: &[u8]) -> String {
    Sha1::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ReplayFixtureBuilder {
    pub fn create(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let manifest = io::BufWriter::new(File::create(root.join(MANIFEST_FILE))?);
        Ok(Self { root, manifest })
    }

    /// Adds a capture. `body` is stored under the canonical layout;
    /// `fail_times` injects transient failures as described in the module
    /// docs.
    pub fn add(&mut self, capture: &Capture, body: Option<&[u8]>, fail_times: Option<u32>) -> io::Result<()> {
        self.add_with_status(capture, body, fail_times, None)
    }

    pub fn add_with_status(
        &mut self,
        capture: &Capture,
        body: Option<&[u8]>,
        fail_times: Option<u32>,
        fail_status: Option<u16>,
    ) -> io::Result<()> {
        let body_path = match body {
            Some(bytes) => {
                let rel = body_relative_path(capture);
                let path = self.root.join(&rel);
                fs::create_dir_all(path.parent().expect("body path has a parent"))?;
                fs::write(&path, bytes)?;
                Some(rel)
            }
            None => None,
        };
        let entry = ReplayEntry {
            url: capture.url.clone(),
            timestamp: capture.timestamp.clone(),
            status: capture.status,
            mime: capture.mime.clone(),
            digest: capture.digest.clone(),
            body_path,
            fail_times,
            fail_status,
        };
        serde_json::to_writer(&mut self.manifest, &entry)?;
        self.manifest.write_all(b"\n")
    }

    /// Appends a raw manifest line verbatim.
    pub fn add_raw_line(&mut self, line: &str) -> io::Result<()> {
        writeln!(self.manifest, "{line}")
    }

    pub fn finish(mut self) -> io::Result<PathBuf> {
        self.manifest.flush()?;
        Ok(self.root)
    }
}
