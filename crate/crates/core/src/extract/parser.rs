//! URL query parsers: query parameter, path segment and fragment parameter.

use std::borrow::Cow;
use std::fmt;

use percent_encoding::percent_decode_str;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::url::{parameter_pairs, UrlComponents};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserKind {
    QueryParameter,
    PathSegment,
    FragmentParameter,
}

impl ParserKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParserKind::QueryParameter => "query_parameter",
            ParserKind::PathSegment => "path_segment",
            ParserKind::FragmentParameter => "fragment_parameter",
        }
    }
}

/// Which extraction field a parser feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Query,
    Page,
    Offset,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::Query => "query",
            Field::Page => "page",
            Field::Offset => "offset",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParserSpecError {
    #[error("kind {kind} requires `{key}`")]
    MissingKey { kind: &'static str, key: &'static str },
    #[error("kind {kind} does not take `{key}`")]
    UnexpectedKey { kind: &'static str, key: &'static str },
    #[error("invalid regular expression in `{key}`: {message}")]
    BadRegex { key: &'static str, message: String },
}

/// The on-disk shape of a parser spec inside the registry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryParserSpecDef {
    pub kind: ParserKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url_gate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Field>,
}

#[derive(Debug, Clone)]
enum Locus {
    Parameter(String),
    Segment(usize),
}

/// A validated parser spec with compiled regular expressions.
///
/// `url_gate` is searched anywhere in the full URL (use `^`/`$` to anchor);
/// `strip_prefix` is always anchored at the start of the raw value. Both use
/// the syntax of the `regex` crate.
#[derive(Debug, Clone)]
pub struct QueryParserSpec {
    kind: ParserKind,
    locus: Locus,
    field: Field,
    url_gate: Option<Regex>,
    strip_prefix: Option<Regex>,
    strip_source: Option<String>,
}

impl PartialEq for QueryParserSpec {
    fn eq(&self, other: &Self) -> bool {
        self.to_def() == other.to_def()
    }
}

fn compile(key: &'static str, pattern: &str) -> Result<Regex, ParserSpecError> {
    Regex::new(pattern).map_err(|e| ParserSpecError::BadRegex { key, message: e.to_string() })
}

impl QueryParserSpec {
    pub fn query_parameter(name: &str, field: Field) -> Self {
        Self::from_def(
            &QueryParserSpecDef {
                kind: ParserKind::QueryParameter,
                parameter_name: Some(name.to_string()),
                segment_index: None,
                url_gate: None,
                strip_prefix: None,
                field: None,
            },
            field,
        )
        .expect("plain parameter spec is valid")
    }

    pub fn fragment_parameter(name: &str, field: Field) -> Self {
        let mut spec = Self::query_parameter(name, field);
        spec.kind = ParserKind::FragmentParameter;
        spec
    }

    pub fn path_segment(index: usize, field: Field) -> Self {
        Self::from_def(
            &QueryParserSpecDef {
                kind: ParserKind::PathSegment,
                parameter_name: None,
                segment_index: Some(index),
                url_gate: None,
                strip_prefix: None,
                field: None,
            },
            field,
        )
        .expect("plain segment spec is valid")
    }

    pub fn with_url_gate(mut self, pattern: &str) -> Result<Self, ParserSpecError> {
        self.url_gate = Some(compile("url_gate", pattern)?);
        Ok(self)
    }

    pub fn with_strip_prefix(mut self, pattern: &str) -> Result<Self, ParserSpecError> {
        self.strip_prefix = Some(compile("strip_prefix", &format!("^(?:{pattern})"))?);
        self.strip_source = Some(pattern.to_string());
        Ok(self)
    }

    /// Validates a definition. `default_field` applies when the definition
    /// leaves `field` unset.
    pub fn from_def(def: &QueryParserSpecDef, default_field: Field) -> Result<Self, ParserSpecError> {
        let kind_name = def.kind.as_str();
        let locus = match def.kind {
            ParserKind::QueryParameter | ParserKind::FragmentParameter => {
                if def.segment_index.is_some() {
                    return Err(ParserSpecError::UnexpectedKey { kind: kind_name, key: "segment_index" });
                }
                let name = def
                    .parameter_name
                    .clone()
                    .ok_or(ParserSpecError::MissingKey { kind: kind_name, key: "parameter_name" })?;
                Locus::Parameter(name)
            }
            ParserKind::PathSegment => {
                if def.parameter_name.is_some() {
                    return Err(ParserSpecError::UnexpectedKey { kind: kind_name, key: "parameter_name" });
                }
                Locus::Segment(
                    def.segment_index.ok_or(ParserSpecError::MissingKey { kind: kind_name, key: "segment_index" })?,
                )
            }
        };
        let mut spec = Self {
            kind: def.kind,
            locus,
            field: def.field.unwrap_or(default_field),
            url_gate: None,
            strip_prefix: None,
            strip_source: None,
        };
        if let Some(gate) = &def.url_gate {
            spec = spec.with_url_gate(gate)?;
        }
        if let Some(prefix) = &def.strip_prefix {
            spec = spec.with_strip_prefix(prefix)?;
        }
        Ok(spec)
    }

    pub fn to_def(&self) -> QueryParserSpecDef {
        let (parameter_name, segment_index) = match &self.locus {
            Locus::Parameter(name) => (Some(name.clone()), None),
            Locus::Segment(idx) => (None, Some(*idx)),
        };
        QueryParserSpecDef {
            kind: self.kind,
            parameter_name,
            segment_index,
            url_gate: self.url_gate.as_ref().map(|r| r.as_str().to_string()),
            strip_prefix: self.strip_source.clone(),
            field: Some(self.field),
        }
    }

    pub fn kind(&self) -> ParserKind {
        self.kind
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// Returns the raw (undecoded, prefix-stripped) value the spec addresses
    /// in `components`, if any.
    pub fn apply<'a>(&self, components: &'a UrlComponents) -> Option<Cow<'a, str>> {
        if let Some(gate) = &self.url_gate {
            if !gate.is_match(&components.to_string()) {
                return None;
            }
        }
        let raw: &'a str = match (&self.locus, self.kind) {
            (Locus::Parameter(name), ParserKind::QueryParameter) => {
                first_parameter(components.query_string.as_deref()?, name)?
            }
            (Locus::Parameter(name), _) => first_parameter(components.fragment.as_deref()?, name)?,
            (Locus::Segment(idx), _) => components.path.get(*idx)?.as_str(),
        };
        match &self.strip_prefix {
            Some(prefix) => match prefix.find(raw) {
                Some(m) => Some(Cow::Owned(raw[m.end()..].to_string())),
                None => Some(Cow::Borrowed(raw)),
            },
            None => Some(Cow::Borrowed(raw)),
        }
    }
}

fn first_parameter<'a>(raw: &'a str, name: &str) -> Option<&'a str> {
    parameter_pairs(raw).find(|(key, _)| *key == name).map(|(_, value)| value)
}

/// Free-function form of [`QueryParserSpec::apply`].
pub fn apply_parser<'a>(spec: &QueryParserSpec, components: &'a UrlComponents) -> Option<Cow<'a, str>> {
    spec.apply(components)
}

/// Decodes a raw extracted value.
///
/// Percent-escapes are decoded as UTF-8 with invalid byte sequences replaced;
/// malformed escapes such as `%ZZ` are kept literally. For the two parameter
/// kinds `+` means space; in path segments it stays a plus sign. The result
/// is trimmed.
pub fn decode_value(raw: &str, kind: ParserKind) -> String {
    let plus_decoded: Cow<'_, str> = match kind {
        ParserKind::QueryParameter | ParserKind::FragmentParameter if raw.contains('+') => {
            Cow::Owned(raw.replace('+', " "))
        }
        _ => Cow::Borrowed(raw),
    };
    percent_decode_str(&plus_decoded).decode_utf8_lossy().trim().to_string()
}
