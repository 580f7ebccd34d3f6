//! Name-based identifiers and Wayback snapshot URLs.

use uuid::Uuid;

use crate::archive::cdx::DEFAULT_ARCHIVE_BASE;

/// Version-5 UUID of `name` under the RFC 4122 URL namespace.
pub fn name_uuid(name: &str) -> Uuid {
    Uuid::new_v5(&Uuid::NAMESPACE_URL, name.as_bytes())
}

/// Query id: name is `"<timestamp> <url>"`.
pub fn query_id(url: &str, timestamp: &str) -> Uuid {
    name_uuid(&format!("{timestamp} {url}"))
}

/// Result id: name is `"<query timestamp> <rank> <document url>"`.
pub fn result_id(doc_url: &str, query_timestamp: &str, rank: u64) -> Uuid {
    name_uuid(&format!("{query_timestamp} {rank} {doc_url}"))
}

/// `<base>/web/<timestamp>/<url>`, with `base` substituted verbatim.
pub fn wayback_url(base: Option<&str>, timestamp: &str, url: &str) -> String {
    let base = base.unwrap_or(DEFAULT_ARCHIVE_BASE);
    format!("{base}/web/{timestamp}/{url}")
}

/// Inverse of [`wayback_url`]: `(base, timestamp, url)`.
pub fn split_wayback_url(wayback: &str) -> Option<(&str, &str, &str)> {
    let (base, rest) = wayback.split_once("/web/")?;
    let (timestamp, url) = rest.split_once('/')?;
    Some((base, timestamp, url))
}
