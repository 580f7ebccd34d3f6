//! Registrable-domain extraction backed by the bundled public suffix list.

use url::Url;

/// Returns the public-suffix-plus-one label of `host`, lowercased.
///
/// Hosts that are themselves a public suffix, IP literals, and hosts the
/// list cannot classify fall back to the host itself.
pub fn registrable_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.parse::<std::net::IpAddr>().is_ok() || host.starts_with('[') {
        return host;
    }
    match psl::domain(host.as_bytes()) {
        Some(domain) => String::from_utf8_lossy(domain.as_bytes()).into_owned(),
        None => host,
    }
}

/// Registrable domain of an absolute URL's host, if it has one.
pub fn registrable_domain_of_url(url: &str) -> Option<String> {
    let parsed = Url::parse(url).ok()?;
    parsed.host_str().map(registrable_domain)
}
