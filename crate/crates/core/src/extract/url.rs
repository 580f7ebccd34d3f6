//! Lossless splitting of SERP URLs into scheme, authority, path, query
//! string and fragment, following the generic RFC 2396 layout.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unparseable URL {url:?}: {reason}")]
pub struct UrlError {
    pub url: String,
    pub reason: &'static str,
}

/// The components of a URL. No percent-decoding is applied, so
/// [`UrlComponents::to_string`] reproduces the input byte for byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlComponents {
    pub scheme: Option<String>,
    pub authority: String,
    /// Non-empty raw path segments.
    pub path: Vec<String>,
    pub query_string: Option<String>,
    pub fragment: Option<String>,
    raw_path: String,
    double_slash: bool,
}

impl UrlComponents {
    /// The raw path including its slashes.
    pub fn raw_path(&self) -> &str {
        &self.raw_path
    }

    /// Host part of the authority, without userinfo or port.
    pub fn host(&self) -> &str {
        let after_user = self.authority.rsplit_once('@').map_or(self.authority.as_str(), |(_, h)| h);
        if after_user.starts_with('[') {
            return after_user.find(']').map_or(after_user, |end| &after_user[..=end]);
        }
        after_user.split(':').next().unwrap_or(after_user)
    }
}

impl fmt::Display for UrlComponents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(scheme) = &self.scheme {
            write!(f, "{scheme}:")?;
        }
        if self.double_slash {
            f.write_str("//")?;
        }
        f.write_str(&self.authority)?;
        f.write_str(&self.raw_path)?;
        if let Some(q) = &self.query_string {
            write!(f, "?{q}")?;
        }
        if let Some(frag) = &self.fragment {
            write!(f, "#{frag}")?;
        }
        Ok(())
    }
}

fn scheme_len(url: &str) -> Option<usize> {
    let colon = url.find(':')?;
    let candidate = &url[..colon];
    let mut chars = candidate.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    if chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) {
        Some(colon)
    } else {
        None
    }
}

/// Splits `url` into its components.
///
/// Accepts `scheme://authority...`, network-path references
/// (`//authority...`) and scheme-less `host/path` strings as found in URL
/// prefixes. A scheme without an authority (`mailto:x`) is rejected.
pub fn split_url(url: &str) -> Result<UrlComponents, UrlError> {
    let err = |reason| UrlError { url: url.to_string(), reason };

    let (scheme, rest, double_slash) = match scheme_len(url) {
        Some(len) if url[len + 1..].starts_with("//") => (Some(url[..len].to_string()), &url[len + 3..], true),
        Some(len) if !url[len + 1..].starts_with(|c: char| c.is_ascii_digit()) => {
            return Err(err("scheme is not followed by an authority"));
        }
        _ => match url.strip_prefix("//") {
            Some(rest) => (None, rest, true),
            None => (None, url, false),
        },
    };

    let authority_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let authority = &rest[..authority_end];
    if authority.is_empty() {
        return Err(err("missing authority"));
    }
    let rest = &rest[authority_end..];

    let (before_fragment, fragment) = match rest.split_once('#') {
        Some((head, frag)) => (head, Some(frag.to_string())),
        None => (rest, None),
    };
    let (raw_path, query_string) = match before_fragment.split_once('?') {
        Some((path, query)) => (path, Some(query.to_string())),
        None => (before_fragment, None),
    };

    let path = raw_path.split('/').filter(|segment| !segment.is_empty()).map(str::to_string).collect();

    Ok(UrlComponents {
        scheme,
        authority: authority.to_string(),
        path,
        query_string,
        fragment,
        raw_path: raw_path.to_string(),
        double_slash,
    })
}

/// Iterates over `name=value` pairs of a query string or fragment: split on
/// `&`, then on the first `=`. Pairs without `=` have an empty value.
pub fn parameter_pairs(raw: &str) -> impl Iterator<Item = (&str, &str)> {
    raw.split('&').filter(|pair| !pair.is_empty()).map(|pair| pair.split_once('=').unwrap_or((pair, "")))
}
