//! Selector-driven parsing of archived SERP HTML.

pub mod approval;
pub mod ranks;
pub mod selector;

use std::borrow::Cow;
use std::sync::OnceLock;

use regex::Regex;
use scraper::{ElementRef, Html};
use serde::{Deserialize, Serialize};
use url::Url;

pub use approval::{approval_record, approval_verify, ApprovalError, SerpFixture, Verdict};
pub use ranks::{infer_continued_ranks, MergedRanking, PagePosition, SerpPage};
pub use selector::{CssPath, SelectorError};

/// On-disk shape of a SERP parser configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerpParserSpecDef {
    pub results_selector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url_selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet_selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url_gate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SerpSpecError {
    #[error("`{key}`: {source}")]
    Selector {
        key: &'static str,
        #[source]
        source: SelectorError,
    },
    #[error("`url_gate`: {0}")]
    Gate(String),
}

/// A validated SERP parser configuration.
///
/// `results_selector` addresses every result item; the title, URL and
/// snippet selectors are evaluated inside each item. Without a
/// `url_selector` the item itself must carry the `href`.
#[derive(Debug, Clone)]
pub struct SerpParserSpec {
    results: CssPath,
    title: Option<CssPath>,
    url: Option<CssPath>,
    snippet: Option<CssPath>,
    query: Option<CssPath>,
    url_gate: Option<Regex>,
}

impl PartialEq for SerpParserSpec {
    fn eq(&self, other: &Self) -> bool {
        self.to_def() == other.to_def()
    }
}

fn css(key: &'static str, source: &Option<String>) -> Result<Option<CssPath>, SerpSpecError> {
    source.as_deref().map(|s| CssPath::parse(s).map_err(|source| SerpSpecError::Selector { key, source })).transpose()
}

impl SerpParserSpec {
    pub fn from_def(def: &SerpParserSpecDef) -> Result<Self, SerpSpecError> {
        Ok(Self {
            results: CssPath::parse(&def.results_selector)
                .map_err(|source| SerpSpecError::Selector { key: "results_selector", source })?,
            title: css("title_selector", &def.title_selector)?,
            url: css("url_selector", &def.url_selector)?,
            snippet: css("snippet_selector", &def.snippet_selector)?,
            query: css("query_selector", &def.query_selector)?,
            url_gate: def
                .url_gate
                .as_deref()
                .map(|g| Regex::new(g).map_err(|e| SerpSpecError::Gate(e.to_string())))
                .transpose()?,
        })
    }

    pub fn to_def(&self) -> SerpParserSpecDef {
        let src = |p: &Option<CssPath>| p.as_ref().map(|p| p.as_str().to_string());
        SerpParserSpecDef {
            results_selector: self.results.as_str().to_string(),
            title_selector: src(&self.title),
            url_selector: src(&self.url),
            snippet_selector: src(&self.snippet),
            query_selector: src(&self.query),
            url_gate: self.url_gate.as_ref().map(|r| r.as_str().to_string()),
        }
    }

    fn applies_to(&self, serp_url: &str) -> bool {
        self.url_gate.as_ref().map_or(true, |g| g.is_match(serp_url))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub rank: u32,
    pub title: String,
    pub url: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSerp {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpreted_query: Option<String>,
    pub results: Vec<SearchResult>,
    /// Index of the spec in the chain that produced this parse.
    pub matched_spec: usize,
}

/// Decodes HTML bytes using a declared `charset` when one appears in the
/// first kilobyte, UTF-8 otherwise. A byte-order mark wins over both.
/// Undecodable bytes are replaced.
pub fn decode_html(bytes: &[u8]) -> Cow<'_, str> {
    static CHARSET: OnceLock<regex::bytes::Regex> = OnceLock::new();
    let re = CHARSET
        .get_or_init(|| regex::bytes::Regex::new(r#"(?i)charset\s*=\s*["']?([a-z0-9_:.\-]+)"#).expect("static regex"));
    let head = &bytes[..bytes.len().min(1024)];
    let encoding =
        re.captures(head).and_then(|c| encoding_rs::Encoding::for_label(&c[1])).unwrap_or(encoding_rs::UTF_8);
    let (text, _, _) = encoding.decode(bytes);
    text
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn element_text(element: ElementRef<'_>) -> String {
    collapse_whitespace(&element.text().collect::<String>())
}

fn first_text(item: ElementRef<'_>, path: &Option<CssPath>) -> String {
    path.as_ref().and_then(|p| item.select(p.selector()).next()).map(element_text).unwrap_or_default()
}

/// Strips a Wayback replay prefix (`/web/<timestamp>[flag_]/`) from a link,
/// returning the original URL it rewrites.
pub fn unwrap_archive_url(href: &str) -> Option<String> {
    static REWRITE: OnceLock<Regex> = OnceLock::new();
    let re = REWRITE.get_or_init(|| {
        Regex::new(r"^(?:https?://web\.archive\.org)?/web/\d{1,14}(?:[a-z]{2}_)?/(.+)$").expect("static regex")
    });
    let original = re.captures(href)?.get(1)?.as_str();
    if original.starts_with("http://") || original.starts_with("https://") {
        Some(original.to_string())
    } else if let Some(rest) = original.strip_prefix("http:/").or_else(|| original.strip_prefix("https:/")) {
        let scheme = if original.starts_with("https") { "https" } else { "http" };
        Some(format!("{scheme}://{rest}"))
    } else {
        Some(format!("http://{original}"))
    }
}

/// Resolves a result link to an absolute http(s) URL.
pub fn resolve_result_url(href: &str, base: Option<&Url>) -> Option<String> {
    let href = href.trim();
    if href.is_empty() {
        return None;
    }
    let candidate = match unwrap_archive_url(href) {
        Some(original) => Url::parse(&original).ok()?,
        None => match Url::parse(href) {
            Ok(absolute) => absolute,
            Err(url::ParseError::RelativeUrlWithoutBase) => base?.join(href).ok()?,
            Err(_) => return None,
        },
    };
    if !matches!(candidate.scheme(), "http" | "https") {
        return None;
    }
    // A link resolved against an archive base may still carry the replay prefix.
    if candidate.host_str() == Some("web.archive.org") {
        if let Some(original) = unwrap_archive_url(candidate.as_str()) {
            return Some(original);
        }
    }
    Some(candidate.to_string())
}

fn parse_with(spec: &SerpParserSpec, index: usize, document: &Html, base: Option<&Url>) -> Option<ParsedSerp> {
    let items: Vec<ElementRef<'_>> = document.select(spec.results.selector()).collect();
    if items.is_empty() {
        return None;
    }
    let mut results = Vec::with_capacity(items.len());
    for item in items {
        let anchor = match &spec.url {
            Some(path) => item.select(path.selector()).next(),
            None => Some(item),
        };
        let Some(url) = anchor.and_then(|a| a.value().attr("href")).and_then(|href| resolve_result_url(href, base))
        else {
            tracing::warn!(spec = index, "dropping result item without a usable link");
            continue;
        };
        results.push(SearchResult {
            rank: results.len() as u32 + 1,
            title: first_text(item, &spec.title),
            url,
            snippet: first_text(item, &spec.snippet),
        });
    }
    let interpreted_query = spec
        .query
        .as_ref()
        .and_then(|p| document.select(p.selector()).next())
        .map(|field| match field.value().attr("value") {
            Some(value) => collapse_whitespace(value),
            None => element_text(field),
        })
        .filter(|q| !q.is_empty());
    Some(ParsedSerp { interpreted_query, results, matched_spec: index })
}

/// Parses `html` with the first applicable spec of the chain.
///
/// A spec applies when its `url_gate` matches `base_url` (or it has none)
/// and its results selector matches at least one element. Returns `None`
/// when no spec applies.
pub fn parse_serp(html: &[u8], base_url: &str, specs: &[SerpParserSpec]) -> Option<ParsedSerp> {
    let text = decode_html(html);
    let document = Html::parse_document(&text);
    let base = Url::parse(base_url).ok();
    specs
        .iter()
        .enumerate()
        .filter(|(_, spec)| spec.applies_to(base_url))
        .find_map(|(index, spec)| parse_with(spec, index, &document, base.as_ref()))
}
