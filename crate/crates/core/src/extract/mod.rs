//! Query, page and offset extraction from SERP URLs.

pub mod parser;
pub mod url;

use serde::{Deserialize, Serialize};

use crate::archive::Capture;
use crate::providers::ProviderConfig;

pub use parser::{apply_parser, decode_value, Field, ParserKind, QueryParserSpec, QueryParserSpecDef};
pub use url::{split_url, UrlComponents, UrlError};

/// Index into the provider's parser list that produced each field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedParsers {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
    #[serde(default)]
    pub matched_parser: MatchedParsers,
}

/// The three ordered parser chains of one provider.
#[derive(Debug, Clone, Copy)]
pub struct ParserChains<'a> {
    pub query: &'a [QueryParserSpec],
    pub page: &'a [QueryParserSpec],
    pub offset: &'a [QueryParserSpec],
}

impl<'a> From<&'a ProviderConfig> for ParserChains<'a> {
    fn from(provider: &'a ProviderConfig) -> Self {
        Self { query: &provider.query_parsers, page: &provider.page_parsers, offset: &provider.offset_parsers }
    }
}

fn first_text(chain: &[QueryParserSpec], components: &UrlComponents) -> Option<(usize, String)> {
    chain.iter().enumerate().find_map(|(idx, spec)| {
        let raw = spec.apply(components)?;
        let decoded = decode_value(&raw, spec.kind());
        (!decoded.is_empty()).then_some((idx, decoded))
    })
}

fn first_number(chain: &[QueryParserSpec], components: &UrlComponents) -> Option<(usize, u64)> {
    chain.iter().enumerate().find_map(|(idx, spec)| {
        let raw = spec.apply(components)?;
        let decoded = decode_value(&raw, spec.kind());
        if decoded.is_empty() || !decoded.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        decoded.parse().ok().map(|n| (idx, n))
    })
}

/// Runs each field's chain independently over an already split URL; the
/// first spec yielding a non-empty decoded value wins.
pub fn extract_components(chains: ParserChains<'_>, components: &UrlComponents) -> Option<ExtractionResult> {
    let query = first_text(chains.query, components);
    let page = first_number(chains.page, components);
    let offset = first_number(chains.offset, components);
    if query.is_none() && page.is_none() && offset.is_none() {
        return None;
    }
    Some(ExtractionResult {
        matched_parser: MatchedParsers {
            query: query.as_ref().map(|(i, _)| *i),
            page: page.map(|(i, _)| i),
            offset: offset.map(|(i, _)| i),
        },
        query: query.map(|(_, q)| q),
        page: page.map(|(_, p)| p),
        offset: offset.map(|(_, o)| o),
    })
}

pub fn extract_url(chains: ParserChains<'_>, url: &str) -> Option<ExtractionResult> {
    let components = split_url(url).ok()?;
    extract_components(chains, &components)
}

/// Extracts query, page and offset from a capture of `provider`.
pub fn extract(provider: &ProviderConfig, capture: &Capture) -> Option<ExtractionResult> {
    extract_url(provider.into(), &capture.url)
}
