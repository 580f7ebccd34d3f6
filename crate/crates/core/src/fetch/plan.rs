//! Per-provider capped download plans.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::archive::Capture;
use crate::dedup::Representative;
use crate::providers::ProviderRegistry;
use crate::timestamp::Timestamp14;

pub const DEFAULT_DOWNLOAD_CAP: u64 = 100_000;

/// One line of the plan file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub provider: String,
    pub url: String,
    pub timestamp: Timestamp14,
    pub query: String,
    #[serde(default)]
    pub page: Option<u64>,
    #[serde(default)]
    pub offset: Option<u64>,
}

impl PlanEntry {
    pub fn from_representative(rep: &Representative) -> Self {
        Self {
            provider: rep.row.provider.clone(),
            url: rep.row.url.clone(),
            timestamp: rep.row.timestamp.clone(),
            query: rep.row.query.clone(),
            page: rep.row.page,
            offset: rep.row.offset,
        }
    }

    /// Capture addressed by this entry; only URL and timestamp matter for
    /// retrieval.
    pub fn capture(&self) -> Capture {
        Capture {
            url: self.url.clone(),
            timestamp: self.timestamp.clone(),
            status: 200,
            mime: "text/html".into(),
            digest: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DownloadPlan {
    pub entries: Vec<PlanEntry>,
    /// Planned entries per provider.
    pub counts: BTreeMap<String, u64>,
    /// Entries dropped by caps, per provider.
    pub truncated: BTreeMap<String, u64>,
}

/// Groups entries by provider, orders each provider by `(query, url)` and
/// keeps the first `cap` of them. A provider in the registry without a
/// `download_cap` is unlimited; providers missing from the registry get
/// `default_cap`. Providers come out in name order.
pub fn plan_downloads(
    entries: impl IntoIterator<Item = PlanEntry>,
    registry: &ProviderRegistry,
    default_cap: u64,
) -> DownloadPlan {
    let mut by_provider: BTreeMap<String, Vec<PlanEntry>> = BTreeMap::new();
    for entry in entries {
        by_provider.entry(entry.provider.clone()).or_default().push(entry);
    }
    let mut plan = DownloadPlan::default();
    for (provider, mut list) in by_provider {
        list.sort_by(|a, b| (&a.query, &a.url, &a.timestamp).cmp(&(&b.query, &b.url, &b.timestamp)));
        let cap = match registry.get(&provider) {
            Some(config) => config.download_cap,
            None => Some(default_cap),
        };
        let total = list.len() as u64;
        if let Some(cap) = cap {
            list.truncate(usize::try_from(cap).unwrap_or(usize::MAX));
        }
        let kept = list.len() as u64;
        plan.counts.insert(provider.clone(), kept);
        if kept < total {
            plan.truncated.insert(provider, total - kept);
        }
        plan.entries.extend(list);
    }
    plan
}
