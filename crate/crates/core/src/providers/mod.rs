//! The search provider catalog.
//!
//! A registry file is TOML with one `[[providers]]` table per provider:
//!
//! ```toml
//! [[providers]]
//! name = "Google"
//! category = "search-engine"
//! domains = ["google.com"]
//! url_prefixes = ["google.com/search"]
//! download_cap = 100000          # omit for unlimited
//! excluded = false
//!
//! [[providers.query_parsers]]
//! kind = "query_parameter"
//! parameter_name = "q"
//!
//! [[providers.offset_parsers]]
//! kind = "query_parameter"
//! parameter_name = "start"
//!
//! [[providers.serp_parsers]]
//! results_selector = "div.g"
//! title_selector = "h3"
//! url_selector = "a"
//! ```
//!
//! Parser specs may set `field`; when omitted it follows the list the spec
//! is declared in.

pub mod fusion;
pub mod interface;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::extract::{Field, QueryParserSpec, QueryParserSpecDef};
use crate::serp::{SerpParserSpec, SerpParserSpecDef};

pub use fusion::{fuse_rankings, load_snapshot, parse_snapshot, FusionError, RankSnapshot};
pub use interface::detect_search_interface;

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub name: String,
    pub category: String,
    pub domains: Vec<String>,
    pub url_prefixes: Vec<String>,
    pub query_parsers: Vec<QueryParserSpec>,
    pub page_parsers: Vec<QueryParserSpec>,
    pub offset_parsers: Vec<QueryParserSpec>,
    pub serp_parsers: Vec<SerpParserSpec>,
    pub download_cap: Option<u64>,
    pub excluded: bool,
    pub exclusion_reason: Option<String>,
}

impl ProviderConfig {
    /// Whether `url` falls under one of this provider's URL prefixes.
    pub fn matches_url(&self, url: &str) -> bool {
        self.url_prefixes.iter().any(|p| crate::archive::replay::matches_prefix(url, p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProviderDef {
    name: String,
    category: String,
    domains: Vec<String>,
    url_prefixes: Vec<String>,
    #[serde(default)]
    query_parsers: Vec<QueryParserSpecDef>,
    #[serde(default)]
    page_parsers: Vec<QueryParserSpecDef>,
    #[serde(default)]
    offset_parsers: Vec<QueryParserSpecDef>,
    #[serde(default)]
    serp_parsers: Vec<SerpParserSpecDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    download_cap: Option<u64>,
    #[serde(default)]
    excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exclusion_reason: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDef {
    #[serde(default)]
    providers: Vec<ProviderDef>,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("provider {provider:?}, field `{field}`: {message}")]
    Invalid { provider: String, field: String, message: String },
}

fn invalid(provider: &str, field: impl Into<String>, message: impl Into<String>) -> RegistryError {
    RegistryError::Invalid { provider: provider.to_string(), field: field.into(), message: message.into() }
}

fn prefix_host(prefix: &str) -> &str {
    let end = prefix.find(['/', '?', '#']).unwrap_or(prefix.len());
    &prefix[..end]
}

impl ProviderDef {
    fn validate(self) -> Result<ProviderConfig, RegistryError> {
        let name = self.name.clone();
        if name.trim().is_empty() {
            return Err(invalid(&name, "name", "must not be empty"));
        }
        if self.category.trim().is_empty() {
            return Err(invalid(&name, "category", "must not be empty"));
        }
        if self.domains.is_empty() {
            return Err(invalid(&name, "domains", "at least one domain is required"));
        }
        let mut seen = BTreeSet::new();
        for d in &self.domains {
            if d.is_empty() || d.contains(['/', ' ']) {
                return Err(invalid(&name, "domains", format!("{d:?} is not a domain")));
            }
            if !seen.insert(d.as_str()) {
                return Err(invalid(&name, "domains", format!("duplicate domain {d:?}")));
            }
        }
        for prefix in &self.url_prefixes {
            let host = prefix_host(prefix);
            if !self.domains.iter().any(|d| d == host) {
                return Err(invalid(
                    &name,
                    "url_prefixes",
                    format!("prefix {prefix:?} does not start with any of {:?}", self.domains),
                ));
            }
        }
        if self.excluded && self.exclusion_reason.as_deref().map_or(true, |r| r.trim().is_empty()) {
            return Err(invalid(&name, "exclusion_reason", "excluded providers need a reason"));
        }
        if !self.excluded && self.query_parsers.is_empty() {
            return Err(invalid(&name, "query_parsers", "only excluded providers may omit query parsers"));
        }
        if self.download_cap == Some(0) {
            return Err(invalid(&name, "download_cap", "must be positive when present"));
        }
        let parsers =
            |list: &[QueryParserSpecDef], key: &str, field: Field| -> Result<Vec<QueryParserSpec>, RegistryError> {
                list.iter()
                    .enumerate()
                    .map(|(i, def)| {
                        let spec = QueryParserSpec::from_def(def, field)
                            .map_err(|e| invalid(&name, format!("{key}[{i}]"), e.to_string()))?;
                        if spec.field() != field {
                            return Err(invalid(
                                &name,
                                format!("{key}[{i}].field"),
                                format!("{} parser declared in {key}", spec.field()),
                            ));
                        }
                        Ok(spec)
                    })
                    .collect()
            };
        let query_parsers = parsers(&self.query_parsers, "query_parsers", Field::Query)?;
        let page_parsers = parsers(&self.page_parsers, "page_parsers", Field::Page)?;
        let offset_parsers = parsers(&self.offset_parsers, "offset_parsers", Field::Offset)?;
        let serp_parsers = self
            .serp_parsers
            .iter()
            .enumerate()
            .map(|(i, def)| {
                SerpParserSpec::from_def(def).map_err(|e| invalid(&name, format!("serp_parsers[{i}]"), e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(ProviderConfig {
            name: self.name,
            category: self.category,
            domains: self.domains,
            url_prefixes: self.url_prefixes,
            query_parsers,
            page_parsers,
            offset_parsers,
            serp_parsers,
            download_cap: self.download_cap,
            excluded: self.excluded,
            exclusion_reason: self.exclusion_reason,
        })
    }

    fn from_config(p: &ProviderConfig) -> Self {
        let defs =
            |list: &[QueryParserSpec]| list.iter().map(|s| QueryParserSpecDef { field: None, ..s.to_def() }).collect();
        Self {
            name: p.name.clone(),
            category: p.category.clone(),
            domains: p.domains.clone(),
            url_prefixes: p.url_prefixes.clone(),
            query_parsers: defs(&p.query_parsers),
            page_parsers: defs(&p.page_parsers),
            offset_parsers: defs(&p.offset_parsers),
            serp_parsers: p.serp_parsers.iter().map(SerpParserSpec::to_def).collect(),
            download_cap: p.download_cap,
            excluded: p.excluded,
            exclusion_reason: p.exclusion_reason.clone(),
        }
    }
}

/// Validated providers in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProviderRegistry {
    providers: Vec<ProviderConfig>,
    by_name: HashMap<String, usize>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

impl ProviderRegistry {
    pub fn new(providers: Vec<ProviderConfig>) -> Result<Self, RegistryError> {
        let mut by_name = HashMap::new();
        for (idx, p) in providers.iter().enumerate() {
            if by_name.insert(p.name.clone(), idx).is_some() {
                return Err(invalid(&p.name, "name", "duplicate provider name"));
            }
        }
        Ok(Self { providers, by_name })
    }

    /// Parses and validates registry text. `origin` labels parse errors.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, RegistryError> {
        let def: RegistryDef = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            RegistryError::Parse { path: origin.to_path_buf(), line, column, message: e.message().to_string() }
        })?;
        let providers = def.providers.into_iter().map(ProviderDef::validate).collect::<Result<Vec<_>, _>>()?;
        Self::new(providers)
    }

    pub fn to_toml_string(&self) -> String {
        let def = RegistryDef { providers: self.providers.iter().map(ProviderDef::from_config).collect() };
        toml::to_string(&def).expect("registry is always representable as TOML")
    }

    pub fn len(&self) -> usize {
        self.providers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.providers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProviderConfig> {
        self.providers.iter()
    }

    pub fn get(&self, name: &str) -> Option<&ProviderConfig> {
        self.by_name.get(name).map(|&i| &self.providers[i])
    }

    /// Providers that are not excluded, in file order.
    pub fn active(&self) -> impl Iterator<Item = &ProviderConfig> {
        self.providers.iter().filter(|p| !p.excluded)
    }
}

pub fn load_registry(path: &Path) -> Result<ProviderRegistry, RegistryError> {
    let text = fs::read_to_string(path).map_err(|source| RegistryError::Io { path: path.to_path_buf(), source })?;
    ProviderRegistry::from_toml_str(&text, path)
}

pub fn save_registry(registry: &ProviderRegistry, path: &Path) -> Result<(), RegistryError> {
    fs::write(path, registry.to_toml_string()).map_err(|source| RegistryError::Io { path: path.to_path_buf(), source })
}
