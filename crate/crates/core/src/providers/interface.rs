//! Static search-interface heuristic for provider landing pages.

use scraper::{Html, Selector};

use crate::serp::decode_html;

/// True when the document has a `<form>`, or a `<div>` with "search"
/// (case-insensitive) in any attribute name or value. Scripts are not run.
pub fn detect_search_interface(html: &[u8]) -> bool {
    let text = decode_html(html);
    let document = Html::parse_document(&text);
    let form = Selector::parse("form").expect("static selector");
    if document.select(&form).next().is_some() {
        return true;
    }
    let div = Selector::parse("div").expect("static selector");
    document.select(&div).any(|el| {
        el.value()
            .attrs()
            .any(|(name, value)| name.to_lowercase().contains("search") || value.to_lowercase().contains("search"))
    })
}
