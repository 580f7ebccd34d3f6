//! Grouping extracted queries by `(provider, query)` and picking one
//! representative capture per group.
//!
//! Grouping runs as an external sort: rows are buffered, sorted and spilled
//! to NDJSON chunk files, then merged back in `(provider, query)` order, so
//! memory stays bounded by the chunk size.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::Capture;
use crate::extract::{split_url, ExtractionResult, MatchedParsers};
use crate::timestamp::Timestamp14;

pub const DEFAULT_CHUNK_SIZE: usize = 100_000;

/// One capture with a successfully extracted query; the row format of the
/// extraction output and of the spill files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedQuery {
    pub provider: String,
    pub url: String,
    pub timestamp: Timestamp14,
    pub query: String,
    #[serde(default)]
    pub page: Option<u64>,
    #[serde(default)]
    pub offset: Option<u64>,
    #[serde(default = "default_status")]
    pub status: u16,
    #[serde(default)]
    pub mime: String,
    #[serde(default)]
    pub digest: String,
    #[serde(default)]
    pub matched_parser: MatchedParsers,
}

fn default_status() -> u16 {
    200
}

impl ExtractedQuery {
    /// Returns `None` when the extraction has no query.
    pub fn new(provider: &str, capture: &Capture, extraction: &ExtractionResult) -> Option<Self> {
        Some(Self {
            provider: provider.to_string(),
            url: capture.url.clone(),
            timestamp: capture.timestamp.clone(),
            query: extraction.query.clone()?,
            page: extraction.page,
            offset: extraction.offset,
            status: capture.status,
            mime: capture.mime.clone(),
            digest: capture.digest.clone(),
            matched_parser: extraction.matched_parser,
        })
    }

    pub fn capture(&self) -> Capture {
        Capture {
            url: self.url.clone(),
            timestamp: self.timestamp.clone(),
            status: self.status,
            mime: self.mime.clone(),
            digest: self.digest.clone(),
        }
    }

    pub fn extraction(&self) -> ExtractionResult {
        ExtractionResult {
            query: Some(self.query.clone()),
            page: self.page,
            offset: self.offset,
            matched_parser: self.matched_parser,
        }
    }

    /// Total order used by the sort: group key first, then a stable
    /// tail so chunk boundaries cannot change the merged sequence.
    fn sort_cmp(&self, other: &Self) -> Ordering {
        (&self.provider, &self.query, &self.url, &self.timestamp, self.status, &self.digest, &self.mime)
            .cmp(&(
                &other.provider,
                &other.query,
                &other.url,
                &other.timestamp,
                other.status,
                &other.digest,
                &other.mime,
            ))
            .then_with(|| (self.page, self.offset).cmp(&(other.page, other.offset)))
    }
}

/// All captures of one provider that parsed to the same query string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryGroup {
    pub provider: String,
    pub query: String,
    pub members: Vec<ExtractedQuery>,
}

/// The selected capture of a group plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representative {
    #[serde(flatten)]
    pub row: ExtractedQuery,
    /// Earliest timestamp among members sharing the representative URL.
    pub earliest_timestamp: Timestamp14,
    pub group_size: usize,
}

/// Byte length of the raw query-string component; 0 when absent or
/// when the URL does not split.
pub fn query_string_len(url: &str) -> usize {
    split_url(url).ok().and_then(|c| c.query_string.map(|q| q.len())).unwrap_or(0)
}

/// Selection key: query-string length, URL length, URL bytes.
pub fn representative_key(url: &str) -> (usize, usize, &str) {
    (query_string_len(url), url.len(), url)
}

/// Picks the member with the smallest [`representative_key`]. Timestamps
/// do not influence which URL is chosen; among members with that exact URL
/// the earliest capture is returned. Independent of member order.
pub fn select_representative(group: &QueryGroup) -> Representative {
    assert!(!group.members.is_empty(), "query group without members");
    let best = group
        .members
        .iter()
        .min_by(|a, b| representative_key(&a.url).cmp(&representative_key(&b.url)).then_with(|| a.sort_cmp(b)))
        .expect("non-empty");
    Representative { row: best.clone(), earliest_timestamp: best.timestamp.clone(), group_size: group.members.len() }
}

/// In-memory grouping; groups come out sorted by `(provider, query)`.
pub fn group_queries(items: impl IntoIterator<Item = ExtractedQuery>) -> Vec<QueryGroup> {
    let mut rows: Vec<ExtractedQuery> = items.into_iter().collect();
    rows.sort_by(ExtractedQuery::sort_cmp);
    let mut groups: Vec<QueryGroup> = Vec::new();
    for row in rows {
        match groups.last_mut() {
            Some(g) if g.provider == row.provider && g.query == row.query => g.members.push(row),
            _ => {
                groups.push(QueryGroup { provider: row.provider.clone(), query: row.query.clone(), members: vec![row] })
            }
        }
    }
    groups
}

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("spill file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("spill file {path} line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Sorts rows by group key through spill files under a working directory.
pub struct ExternalGrouper {
    dir: PathBuf,
    chunk_size: usize,
    buffer: Vec<ExtractedQuery>,
    chunks: Vec<PathBuf>,
}

impl ExternalGrouper {
    pub fn new(dir: &Path, chunk_size: usize) -> Result<Self, DedupError> {
        std::fs::create_dir_all(dir).map_err(|source| DedupError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), chunk_size: chunk_size.max(1), buffer: Vec::new(), chunks: Vec::new() })
    }

    pub fn push(&mut self, row: ExtractedQuery) -> Result<(), DedupError> {
        self.buffer.push(row);
        if self.buffer.len() >= self.chunk_size {
            self.spill()?;
        }
        Ok(())
    }

    pub fn spill_count(&self) -> usize {
        self.chunks.len()
    }

    fn spill(&mut self) -> Result<(), DedupError> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        self.buffer.sort_by(ExtractedQuery::sort_cmp);
        let path = self.dir.join(format!("spill-{:05}.ndjson", self.chunks.len()));
        let io_err = |source| DedupError::Io { path: path.clone(), source };
        let mut out = BufWriter::new(File::create(&path).map_err(io_err)?);
        for row in self.buffer.drain(..) {
            serde_json::to_writer(&mut out, &row).map_err(|e| io_err(e.into()))?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        self.chunks.push(path);
        Ok(())
    }

    /// Spills the remainder and returns the merged group stream.
    pub fn finish(mut self) -> Result<GroupStream, DedupError> {
        self.spill()?;
        let mut readers = Vec::with_capacity(self.chunks.len());
        let mut heap = BinaryHeap::new();
        for (idx, path) in self.chunks.iter().enumerate() {
            let file = File::open(path).map_err(|source| DedupError::Io { path: path.clone(), source })?;
            let mut reader = ChunkReader { path: path.clone(), lines: BufReader::new(file), line: 0 };
            if let Some(row) = reader.next_row()? {
                heap.push(HeapItem { row, chunk: idx });
            }
            readers.push(reader);
        }
        Ok(GroupStream { readers, heap, failed: false })
    }
}

struct ChunkReader {
    path: PathBuf,
    lines: BufReader<File>,
    line: usize,
}

impl ChunkReader {
    fn next_row(&mut self) -> Result<Option<ExtractedQuery>, DedupError> {
        let mut buf = String::new();
        loop {
            buf.clear();
            let n =
                self.lines.read_line(&mut buf).map_err(|source| DedupError::Io { path: self.path.clone(), source })?;
            if n == 0 {
                return Ok(None);
            }
            self.line += 1;
            if buf.trim().is_empty() {
                continue;
            }
            return serde_json::from_str(&buf).map(Some).map_err(|source| DedupError::Parse {
                path: self.path.clone(),
                line: self.line,
                source,
            });
        }
    }
}

struct HeapItem {
    row: ExtractedQuery,
    chunk: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.row.sort_cmp(&self.row).then_with(|| other.chunk.cmp(&self.chunk))
    }
}

/// K-way merge over spill files yielding whole groups.
pub struct GroupStream {
    readers: Vec<ChunkReader>,
    heap: BinaryHeap<HeapItem>,
    failed: bool,
}

impl GroupStream {
    fn pop(&mut self) -> Result<Option<ExtractedQuery>, DedupError> {
        let Some(HeapItem { row, chunk }) = self.heap.pop() else {
            return Ok(None);
        };
        if let Some(next) = self.readers[chunk].next_row()? {
            self.heap.push(HeapItem { row: next, chunk });
        }
        Ok(Some(row))
    }

    fn next_group(&mut self) -> Result<Option<QueryGroup>, DedupError> {
        let Some(first) = self.pop()? else {
            return Ok(None);
        };
        let mut group =
            QueryGroup { provider: first.provider.clone(), query: first.query.clone(), members: vec![first] };
        while let Some(top) = self.heap.peek() {
            if top.row.provider != group.provider || top.row.query != group.query {
                break;
            }
            let row = self.pop()?.expect("peeked");
            group.members.push(row);
        }
        Ok(Some(group))
    }
}

impl Iterator for GroupStream {
    type Item = Result<QueryGroup, DedupError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_group() {
            Ok(group) => group.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Groups through spill files in `work_dir` and selects representatives,
/// sorted by `(provider, query)`.
pub fn deduplicate(
    rows: impl IntoIterator<Item = ExtractedQuery>,
    work_dir: &Path,
    chunk_size: usize,
) -> Result<Vec<Representative>, DedupError> {
    let mut grouper = ExternalGrouper::new(work_dir, chunk_size)?;
    for row in rows {
        grouper.push(row)?;
    }
    grouper.finish()?.map(|group| group.map(|g| select_representative(&g))).collect()
}
