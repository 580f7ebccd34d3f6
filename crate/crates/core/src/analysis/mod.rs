//! Measurements over an emitted corpus.
//!
//! Each measurement is an [`Accumulator`]: records are added one at a
//! time, partial accumulators built over disjoint shards can be merged in
//! any order, and `finish` produces the result. Results render as
//! tab-separated tables with one header line.

mod measures;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, QueryRecord, ResultRecord};
use crate::jsonl::{read_records, JsonlError};
use crate::timestamp::Timestamp14;

pub use measures::{
    estimate_totals, DataType, DomainShares, ExactOverlap, Histogram, ObscenityShare, ObscenityShares, QueryLengths,
    TermTimeline, TermTimelineSeries, TimeCoverage, TopDomains, OTHERS,
};

/// Lowercase, map every non-alphanumeric character to a space and
/// collapse runs of whitespace.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn tokens(normalized: &str) -> Vec<&str> {
    normalized.split(' ').filter(|t| !t.is_empty()).collect()
}

/// Whether `needle` occurs as a contiguous run of whole tokens.
pub fn contains_token_run(haystack: &[&str], needle: &[String]) -> bool {
    !needle.is_empty()
        && needle.len() <= haystack.len()
        && haystack.windows(needle.len()).any(|w| w.iter().zip(needle).all(|(a, b)| *a == b))
}

/// Normalized token list of a term or query.
pub fn term_tokens(term: &str) -> Vec<String> {
    tokens(&normalize(term)).into_iter().map(str::to_string).collect()
}

pub trait Accumulator: Sized {
    type Item<'a>;
    type Output;

    fn add(&mut self, item: Self::Item<'_>);
    /// Combines two partial results; commutative and associative.
    fn merge(&mut self, other: Self);
    fn finish(self) -> Self::Output;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Month,
    Quarter,
}

/// One calendar month or quarter; `sub` is 1–12 or 1–4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Period {
    pub year: i32,
    pub sub: u32,
    pub granularity: Granularity,
}

impl Period {
    pub fn of(timestamp: &Timestamp14, granularity: Granularity) -> Self {
        let month = timestamp.month();
        let sub = match granularity {
            Granularity::Month => month,
            Granularity::Quarter => (month - 1) / 3 + 1,
        };
        Self { year: timestamp.year(), sub, granularity }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.granularity {
            Granularity::Month => write!(f, "{}-{:02}", self.year, self.sub),
            Granularity::Quarter => write!(f, "{}Q{}", self.year, self.sub),
        }
    }
}

/// `(period, count)` pairs with strictly increasing periods.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimeSeries {
    pub points: Vec<(Period, u64)>,
}

impl TimeSeries {
    pub fn labels(&self) -> Vec<(String, u64)> {
        self.points.iter().map(|(p, c)| (p.to_string(), *c)).collect()
    }
}

/// Renders rows as TSV; tabs and newlines inside cells become spaces.
pub fn to_tsv<S: AsRef<str>>(header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> String {
    let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| clean(c.as_ref())).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

/// Streams every query record of a corpus directory, shard by shard.
pub fn corpus_queries(dir: &Path) -> Result<impl Iterator<Item = Result<QueryRecord, JsonlError>>, JsonlError> {
    shard_records(dir, |m| m.queries.iter().map(|s| s.path.clone()).collect())
}

pub fn corpus_results(dir: &Path) -> Result<impl Iterator<Item = Result<ResultRecord, JsonlError>>, JsonlError> {
    shard_records(dir, |m| m.results.iter().map(|s| s.path.clone()).collect())
}

fn shard_records<T: serde::de::DeserializeOwned + 'static>(
    dir: &Path,
    paths: impl Fn(&CorpusManifest) -> Vec<String>,
) -> Result<impl Iterator<Item = Result<T, JsonlError>>, JsonlError> {
    let manifest = CorpusManifest::load(dir)
        .map_err(|source| JsonlError::Io { path: dir.join(crate::corpus::emit::MANIFEST_FILE), source })?;
    let mut iters = Vec::new();
    for rel in paths(&manifest) {
        iters.push(read_records::<T>(&dir.join(rel))?);
    }
    Ok(iters.into_iter().flatten())
}
