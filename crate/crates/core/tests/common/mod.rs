//! Shared generators and brute-force oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use proptest::prelude::*;

use aql_core::archive::replay::ReplayBackend;
use aql_core::archive::{ArchiveBackend, ArchiveClient, Clock, FetchPolicy, ManualClock};
use aql_core::dedup::ExtractedQuery;
use aql_core::extract::{Field, MatchedParsers, ParserKind, QueryParserSpec};
use aql_core::timestamp::Timestamp14;

pub mod checks;
pub mod planted;

pub fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(rel: &str) -> PathBuf {
    workspace().join("fixtures").join(rel)
}

pub fn ts(raw: &str) -> Timestamp14 {
    Timestamp14::parse(raw).unwrap()
}

pub fn row(provider: &str, url: &str, timestamp: &str, query: &str) -> ExtractedQuery {
    ExtractedQuery {
        provider: provider.into(),
        url: url.into(),
        timestamp: ts(timestamp),
        query: query.into(),
        page: None,
        offset: None,
        status: 200,
        mime: "text/html".into(),
        digest: String::new(),
        matched_parser: MatchedParsers::default(),
    }
}

/// Replay client on virtual time, plus the backend for request-log checks.
pub fn replay_client(dir: &Path, policy: FetchPolicy) -> (ArchiveClient, Arc<ReplayBackend>, Arc<ManualClock>) {
    replay_client_paged(dir, policy, aql_core::archive::replay::DEFAULT_PAGE_SIZE)
}

pub fn replay_client_paged(
    dir: &Path,
    policy: FetchPolicy,
    page_size: usize,
) -> (ArchiveClient, Arc<ReplayBackend>, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new());
    let backend = ReplayBackend::open(dir, clock.clone() as Arc<dyn Clock>).unwrap().with_page_size(page_size);
    let backend = Arc::new(backend);
    let client = ArchiveClient::new(backend.clone() as Arc<dyn ArchiveBackend>, policy, clock.clone());
    (client, backend, clock)
}

// ---------------------------------------------------------------------------
// Parser chains over generated URLs.

#[derive(Debug, Clone)]
pub enum Value {
    Words(Vec<String>),
    Number(u32),
}

impl Value {
    fn raw(&self, space: &str) -> String {
        match self {
            Value::Words(w) => w.join(space),
            Value::Number(n) => n.to_string(),
        }
    }

    /// What a correct decoder must produce for this value.
    pub fn decoded(&self) -> String {
        self.raw(" ")
    }

    pub fn number(&self) -> Option<u64> {
        match self {
            Value::Number(n) => Some(u64::from(*n)),
            Value::Words(_) => None,
        }
    }
}

/// A URL described by its parts, so the expected extraction is known
/// without parsing the rendered string.
#[derive(Debug, Clone)]
pub struct UrlModel {
    pub segments: Vec<Value>,
    pub params: Vec<(String, Value)>,
    pub fragment: Vec<(String, Value)>,
    /// Which of the two gate markers appear in the query string.
    pub gates: [bool; 2],
}

pub const PARAM_NAMES: [&str; 5] = ["q", "query", "p", "start", "page"];
pub const GATE_MARKERS: [&str; 2] = ["gate=alpha", "gate=beta"];

impl UrlModel {
    pub fn url(&self) -> String {
        let mut url = String::from("https://example.org/");
        let segments: Vec<String> = self.segments.iter().map(|v| v.raw("%20")).collect();
        url.push_str(&segments.join("/"));
        let mut pairs: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={}", v.raw("+"))).collect();
        for (on, marker) in self.gates.iter().zip(GATE_MARKERS) {
            if *on {
                pairs.push(marker.to_string());
            }
        }
        if !pairs.is_empty() {
            url.push('?');
            url.push_str(&pairs.join("&"));
        }
        if !self.fragment.is_empty() {
            let frag: Vec<String> = self.fragment.iter().map(|(k, v)| format!("{k}={}", v.raw("+"))).collect();
            url.push('#');
            url.push_str(&frag.join("&"));
        }
        url
    }
}

#[derive(Debug, Clone)]
pub enum LocusModel {
    Param(String),
    Fragment(String),
    Segment(usize),
}

#[derive(Debug, Clone)]
pub struct SpecModel {
    pub locus: LocusModel,
    pub gate: Option<usize>,
}

impl SpecModel {
    pub fn build(&self, field: Field) -> QueryParserSpec {
        let spec = match &self.locus {
            LocusModel::Param(n) => QueryParserSpec::query_parameter(n, field),
            LocusModel::Fragment(n) => QueryParserSpec::fragment_parameter(n, field),
            LocusModel::Segment(i) => QueryParserSpec::path_segment(*i, field),
        };
        match self.gate {
            Some(g) => spec.with_url_gate(GATE_MARKERS[g]).unwrap(),
            None => spec,
        }
    }

    pub fn kind(&self) -> ParserKind {
        match self.locus {
            LocusModel::Param(_) => ParserKind::QueryParameter,
            LocusModel::Fragment(_) => ParserKind::FragmentParameter,
            LocusModel::Segment(_) => ParserKind::PathSegment,
        }
    }

    /// The value this spec addresses in the model, honouring the gate and
    /// first-occurrence rule.
    fn lookup<'a>(&self, url: &'a UrlModel) -> Option<&'a Value> {
        if let Some(g) = self.gate {
            if !url.gates[g] {
                return None;
            }
        }
        let first = |pairs: &'a [(String, Value)], name: &str| pairs.iter().find(|(k, _)| k == name).map(|(_, v)| v);
        match &self.locus {
            LocusModel::Param(n) => first(&url.params, n),
            LocusModel::Fragment(n) => first(&url.fragment, n),
            LocusModel::Segment(i) => url.segments.get(*i),
        }
    }
}

/// Oracle: index and value of the first spec yielding a non-empty text.
pub fn oracle_text(chain: &[SpecModel], url: &UrlModel) -> Option<(usize, String)> {
    chain.iter().enumerate().find_map(|(i, s)| {
        let v = s.lookup(url)?.decoded();
        (!v.is_empty()).then_some((i, v))
    })
}

/// Oracle: index and value of the first spec yielding a decimal number.
pub fn oracle_number(chain: &[SpecModel], url: &UrlModel) -> Option<(usize, u64)> {
    chain.iter().enumerate().find_map(|(i, s)| s.lookup(url)?.number().map(|n| (i, n)))
}

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

pub fn value(allow_empty: bool) -> impl Strategy<Value = Value> {
    let min = usize::from(!allow_empty);
    prop_oneof![
        3 => prop::collection::vec(word(), min..4).prop_map(Value::Words),
        2 => (0u32..500).prop_map(Value::Number),
    ]
}

pub fn url_model() -> impl Strategy<Value = UrlModel> {
    let name = prop::sample::select(PARAM_NAMES.to_vec()).prop_map(str::to_string);
    (
        prop::collection::vec(value(false), 0..5),
        prop::collection::vec((name.clone(), value(true)), 0..6),
        prop::collection::vec((name, value(true)), 0..3),
        any::<[bool; 2]>(),
    )
        .prop_map(|(segments, params, fragment, gates)| UrlModel { segments, params, fragment, gates })
}

pub fn spec_model() -> impl Strategy<Value = SpecModel> {
    let name = prop::sample::select(PARAM_NAMES.to_vec()).prop_map(str::to_string);
    let locus = prop_oneof![
        name.clone().prop_map(LocusModel::Param),
        name.prop_map(LocusModel::Fragment),
        (0usize..5).prop_map(LocusModel::Segment),
    ];
    (locus, prop::option::weighted(0.3, 0usize..2)).prop_map(|(locus, gate)| SpecModel { locus, gate })
}

pub fn chain() -> impl Strategy<Value = Vec<SpecModel>> {
    prop::collection::vec(spec_model(), 0..5)
}

// ---------------------------------------------------------------------------
// Dedup groups.

/// Groups of up to 50 captures for one query, drawn from a small URL pool
/// so that length ties and identical URLs are common.
pub fn dedup_group() -> impl Strategy<Value = Vec<ExtractedQuery>> {
    let host = prop::sample::select(vec!["a.org", "b.org", "ab.org", "e.com"]);
    let path = prop::sample::select(vec!["/s", "/search", "/s/x", ""]);
    let extra = prop::sample::select(vec!["", "&x=1", "&hl=en", "&x=12", "&a=b"]);
    let scheme = prop::sample::select(vec!["http", "https"]);
    let member = (scheme, host, path, extra, 0u32..40).prop_map(|(scheme, host, path, extra, minute)| {
        let url = format!("{scheme}://{host}{path}?q=x{extra}");
        row("P", &url, &format!("20200101{:02}{:02}00", minute / 20, minute % 60), "x")
    });
    prop::collection::vec(member, 1..=50)
}

/// Oracle: the member minimising (query-string length, URL length, URL),
/// where the query string is everything between the first `?` and `#`;
/// earliest timestamp among copies of that URL.
pub fn oracle_representative(members: &[ExtractedQuery]) -> (String, Timestamp14) {
    fn qs_len(url: &str) -> usize {
        let before_fragment = url.split('#').next().unwrap();
        before_fragment.split_once('?').map_or(0, |(_, q)| q.len())
    }
    let mut best: Option<&ExtractedQuery> = None;
    for m in members {
        let better = match best {
            None => true,
            Some(b) => {
                let (ka, kb) = ((qs_len(&m.url), m.url.len()), (qs_len(&b.url), b.url.len()));
                ka < kb || (ka == kb && m.url < b.url)
            }
        };
        if better {
            best = Some(m);
        }
    }
    let url = best.unwrap().url.clone();
    let earliest = members.iter().filter(|m| m.url == url).map(|m| m.timestamp.clone()).min().unwrap();
    (url, earliest)
}

// ---------------------------------------------------------------------------
// Rank fusion.

pub fn snapshot_rankings(n: usize, domains: usize) -> impl Strategy<Value = Vec<Vec<String>>> {
    let pool: Vec<String> = (0..domains).map(|i| format!("d{i:02}.com")).collect();
    prop::collection::vec(
        Just(pool).prop_shuffle().prop_flat_map(move |p| {
            let len = p.len();
            (1..=len).prop_map(move |k| p[..k].to_vec())
        }),
        n..=n,
    )
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Oracle: exact Σ 1/(k + rank) over every (snapshot, domain) pair with
/// rank within the cutoff, as numerators over the common denominator
/// lcm(k+1 ..= k+cutoff). Ordered by score descending, then domain.
pub fn oracle_fusion(snapshots: &[Vec<String>], cutoff: usize, k: u32) -> Vec<(String, u128)> {
    let lcm = fusion_denominator(cutoff, k);
    let mut scores: BTreeMap<String, u128> = BTreeMap::new();
    for s in snapshots {
        for (i, d) in s.iter().enumerate().take(cutoff) {
            *scores.entry(d.clone()).or_default() += lcm / (u128::from(k) + i as u128 + 1);
        }
    }
    let mut out: Vec<(String, u128)> = scores.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn fusion_denominator(cutoff: usize, k: u32) -> u128 {
    let lo = u128::from(k) + 1;
    (lo..lo + cutoff as u128).fold(1u128, |l, d| l / gcd(l, d) * d)
}

// ---------------------------------------------------------------------------
// Misc.

pub fn tally<T: Ord + Clone>(items: impl IntoIterator<Item = T>) -> BTreeMap<T, u64> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}
