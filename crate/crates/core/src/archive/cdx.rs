//! Live backend speaking the CDX server and Wayback replay HTTP interfaces.

use std::io::Read;
use std::time::Duration;

use serde_json::Value;

use super::{ArchiveBackend, BackendError, Capture, CdxRow, SnapshotBody};
use crate::timestamp::Timestamp14;

pub const DEFAULT_ARCHIVE_BASE: &str = "https://web.archive.org";

pub struct LiveBackend {
    base: String,
    host: String,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(archive_base: &str) -> Self {
        let base = archive_base.trim_end_matches('/').to_string();
        let host =
            url::Url::parse(&base).ok().and_then(|u| u.host_str().map(str::to_string)).unwrap_or_else(|| base.clone());
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(30))
            .timeout_read(Duration::from_secs(120))
            .user_agent(concat!("aql/", env!("CARGO_PKG_VERSION")))
            .build();
        Self { base, host, agent }
    }

    pub fn listing_url(&self, prefix: &str, page: Option<usize>) -> String {
        let encoded: String = url::form_urlencoded::byte_serialize(prefix.as_bytes()).collect();
        let mut out = format!("{}/cdx/search/cdx?url={encoded}&matchType=prefix&output=json", self.base);
        match page {
            Some(n) => out.push_str(&format!("&page={n}")),
            None => out.push_str("&showNumPages=true"),
        }
        out
    }

    pub fn snapshot_url(&self, timestamp: &Timestamp14, url: &str) -> String {
        format!("{}/web/{timestamp}id_/{url}", self.base)
    }

    fn get(&self, url: &str) -> Result<ureq::Response, BackendError> {
        match self.agent.get(url).call() {
            Ok(response) => Ok(response),
            Err(ureq::Error::Status(code, _)) => Err(BackendError::from_status(code, url)),
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transient(format!("{url}: {t}"))),
        }
    }

    fn get_text(&self, url: &str) -> Result<String, BackendError> {
        self.get(url)?.into_string().map_err(|e| BackendError::Transient(format!("{url}: reading body: {e}")))
    }
}

/// Parses a `showNumPages` response: a bare integer, possibly JSON-wrapped.
pub fn parse_page_count(body: &str) -> Option<usize> {
    let trimmed = body.trim();
    trimmed.parse().ok().or_else(|| match serde_json::from_str::<Value>(trimmed).ok()? {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::Array(rows) => rows.first()?.as_array()?.first()?.as_str()?.parse().ok(),
        _ => None,
    })
}

fn field<'a>(row: &'a [Value], index: Option<usize>) -> Option<&'a str> {
    row.get(index?)?.as_str()
}

/// Parses an `output=json` CDX page: an array of rows whose first row names
/// the fields. Rows that do not map onto a valid capture come back as their
/// raw JSON text.
pub fn parse_cdx_json(body: &str) -> Result<Vec<CdxRow>, String> {
    let trimmed = body.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<Value> = serde_json::from_str(trimmed).map_err(|e| format!("{e}: {trimmed}"))?;
    let mut rows = rows.into_iter();
    let Some(Value::Array(header)) = rows.next() else {
        return Ok(Vec::new());
    };
    let col = |name: &str| header.iter().position(|h| h.as_str() == Some(name));
    let (ts, original, mime, status, digest) =
        (col("timestamp"), col("original"), col("mimetype"), col("statuscode"), col("digest"));
    Ok(rows
        .map(|row| {
            let raw = row.to_string();
            let Value::Array(cells) = &row else {
                return Err(raw);
            };
            let parsed = (|| {
                let url = field(cells, original)?;
                let timestamp = field(cells, ts)?;
                let status = match field(cells, status)? {
                    "-" => 0,
                    s => s.parse().ok()?,
                };
                let mime = field(cells, mime).unwrap_or("");
                let digest = field(cells, digest).unwrap_or("");
                Capture::new(url, timestamp, status, mime, digest).ok()
            })();
            parsed.ok_or(raw)
        })
        .collect())
}

impl ArchiveBackend for LiveBackend {
    fn host(&self) -> &str {
        &self.host
    }

    fn page_count(&self, prefix: &str) -> Result<usize, BackendError> {
        let url = self.listing_url(prefix, None);
        let body = self.get_text(&url)?;
        parse_page_count(&body).ok_or_else(|| BackendError::Permanent {
            status: None,
            message: format!("unexpected page count response from {url}: {body:?}"),
        })
    }

    fn page(&self, prefix: &str, page: usize) -> Result<Vec<CdxRow>, BackendError> {
        let url = self.listing_url(prefix, Some(page));
        let body = self.get_text(&url)?;
        parse_cdx_json(&body).map_err(|e| BackendError::Transient(format!("{url}: malformed page: {e}")))
    }

    fn snapshot(&self, timestamp: &Timestamp14, url: &str) -> Result<SnapshotBody, BackendError> {
        let address = self.snapshot_url(timestamp, url);
        let response = self.get(&address)?;
        let final_url = response.get_url().to_string();
        let mut body = Vec::new();
        response
            .into_reader()
            .read_to_end(&mut body)
            .map_err(|e| BackendError::Transient(format!("{address}: {e}")))?;
        Ok(SnapshotBody { body, final_url })
    }
}
