//! Query and result records, their identifiers and the sharded corpus
//! files.

pub mod emit;
pub mod ids;
pub mod language;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::archive::replay::canonical_prefix_form;
use crate::archive::ArchiveClient;
use crate::dedup::Representative;
use crate::fetch::{read_warc, DownloadRecord, DownloadStatus, WarcError};
use crate::providers::{ProviderConfig, ProviderRegistry};
use crate::serp::{parse_serp, ParsedSerp};
use crate::timestamp::Timestamp14;

pub use emit::{emit_corpus, provider_slug, CorpusManifest, EmitError, ShardEntry};
pub use ids::{name_uuid, query_id, result_id, split_wayback_url, wayback_url};
pub use language::{tag_language, HeuristicDetector, LanguageDetector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub provider: String,
    pub category: String,
    pub url: String,
    pub timestamp: Timestamp14,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
    pub wayback_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warc_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warc_record_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpreted_query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub query_id: String,
    pub rank: u64,
    pub title: String,
    pub snippet: String,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nearest_snapshot_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub provider: String,
    pub timestamp: Timestamp14,
    pub query: String,
}

/// One downloaded SERP after parsing; the row format of the parse stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSerpRecord {
    pub provider: String,
    pub url: String,
    pub timestamp: Timestamp14,
    /// WARC file name within the download directory.
    pub warc_file: String,
    pub warc_record_id: String,
    /// `None` when no spec of the provider's chain applied.
    #[serde(default)]
    pub serp: Option<ParsedSerp>,
}

/// Reads a stored SERP back from WARC and parses it with the provider's
/// chain. Unavailable downloads yield `None`.
pub fn parse_download(
    provider: &ProviderConfig,
    download: &DownloadRecord,
) -> Result<Option<ParsedSerpRecord>, WarcError> {
    let DownloadStatus::Stored { location, .. } = &download.status else {
        return Ok(None);
    };
    let warc = read_warc(location)?;
    Ok(Some(ParsedSerpRecord {
        provider: download.entry.provider.clone(),
        url: download.entry.url.clone(),
        timestamp: download.entry.timestamp.clone(),
        warc_file: location.file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        warc_record_id: location.record_id.clone(),
        serp: parse_serp(&warc.payload, &download.entry.url, &provider.serp_parsers),
    }))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub queries: u64,
    pub with_serp: u64,
    pub unparsed_serps: u64,
    pub results: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("representative for unknown provider {0:?}")]
    UnknownProvider(String),
}

pub struct CorpusBuilder<'a> {
    pub registry: &'a ProviderRegistry,
    pub detector: &'a dyn LanguageDetector,
    pub archive_base: Option<&'a str>,
}

impl CorpusBuilder<'_> {
    /// One query record per representative, joined with its parsed SERP
    /// (if any) by URL and timestamp. Output follows representative order.
    pub fn build(
        &self,
        representatives: &[Representative],
        parsed: &[ParsedSerpRecord],
    ) -> Result<(Vec<QueryRecord>, Vec<ResultRecord>, BuildStats), BuildError> {
        let by_capture: HashMap<(&str, &Timestamp14), &ParsedSerpRecord> =
            parsed.iter().map(|p| ((p.url.as_str(), &p.timestamp), p)).collect();
        let mut stats = BuildStats::default();
        let mut queries = Vec::with_capacity(representatives.len());
        let mut results = Vec::new();
        for rep in representatives {
            let row = &rep.row;
            let provider =
                self.registry.get(&row.provider).ok_or_else(|| BuildError::UnknownProvider(row.provider.clone()))?;
            let id = query_id(&row.url, row.timestamp.as_str()).to_string();
            let mut record = QueryRecord {
                id: id.clone(),
                provider: row.provider.clone(),
                category: provider.category.clone(),
                url: row.url.clone(),
                timestamp: row.timestamp.clone(),
                query: row.query.clone(),
                page: row.page,
                offset: row.offset,
                wayback_url: wayback_url(self.archive_base, row.timestamp.as_str(), &row.url),
                warc_file: None,
                warc_record_id: None,
                interpreted_query: None,
                result_count: None,
                language: tag_language(&row.query, self.detector),
            };
            if let Some(stored) = by_capture.get(&(row.url.as_str(), &row.timestamp)) {
                stats.with_serp += 1;
                record.warc_file = Some(stored.warc_file.clone());
                record.warc_record_id = Some(stored.warc_record_id.clone());
                match &stored.serp {
                    Some(serp) => {
                        record.interpreted_query = serp.interpreted_query.clone();
                        record.result_count = Some(serp.results.len() as u64);
                        for result in &serp.results {
                            let rank = u64::from(result.rank);
                            let text = format!("{} {}", result.title, result.snippet);
                            results.push(ResultRecord {
                                id: result_id(&result.url, row.timestamp.as_str(), rank).to_string(),
                                query_id: id.clone(),
                                rank,
                                title: result.title.clone(),
                                snippet: result.snippet.clone(),
                                url: result.url.clone(),
                                nearest_snapshot_url: None,
                                language: tag_language(&text, self.detector),
                                provider: row.provider.clone(),
                                timestamp: row.timestamp.clone(),
                                query: row.query.clone(),
                            });
                        }
                    }
                    None => stats.unparsed_serps += 1,
                }
            }
            queries.push(record);
        }
        stats.queries = queries.len() as u64;
        stats.results = results.len() as u64;
        Ok((queries, results, stats))
    }
}

/// The capture of `doc_url` closest in time to `around`; ties go to the
/// earlier capture. Listing errors count as "no snapshot".
pub fn nearest_snapshot(
    client: &ArchiveClient,
    doc_url: &str,
    around: &Timestamp14,
) -> Option<crate::archive::Capture> {
    let target = canonical_prefix_form(doc_url);
    let stream = client.list_captures(doc_url).ok()?;
    stream
        .filter_map(Result::ok)
        .filter(|c| c.is_successful_html() && canonical_prefix_form(&c.url) == target)
        .min_by_key(|c| ((c.timestamp.epoch_seconds() - around.epoch_seconds()).abs(), c.timestamp.clone()))
}

/// Fills `nearest_snapshot_url` on every result.
pub fn enrich_nearest_snapshots(results: &mut [ResultRecord], client: &ArchiveClient, archive_base: Option<&str>) {
    for result in results {
        result.nearest_snapshot_url = nearest_snapshot(client, &result.url, &result.timestamp)
            .map(|c| wayback_url(archive_base, c.timestamp.as_str(), &c.url));
    }
}
