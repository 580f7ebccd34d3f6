use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{contains_token_run, normalize, term_tokens, to_tsv, tokens, Accumulator, Granularity, Period, TimeSeries};
use crate::domain::registrable_domain_of_url;
use crate::timestamp::Timestamp14;

/// Group label for providers outside the top-n, and for domains outside
/// the named top list.
pub const OTHERS: &str = "others";

// ---------------------------------------------------------------- lengths

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub group: String,
    /// Query lengths in characters, strictly increasing.
    pub edges: Vec<usize>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Query length (Unicode scalar values) per provider.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryLengths {
    by_provider: BTreeMap<String, BTreeMap<usize, u64>>,
}

impl QueryLengths {
    /// One histogram per top-`top_n` provider by query count (ties by
    /// name), then an `others` histogram over the rest.
    pub fn histograms(&self, top_n: usize) -> Vec<Histogram> {
        let mut providers: Vec<(&String, u64)> =
            self.by_provider.iter().map(|(p, lengths)| (p, lengths.values().sum())).collect();
        providers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let to_hist = |group: String, lengths: &BTreeMap<usize, u64>| Histogram {
            group,
            edges: lengths.keys().copied().collect(),
            counts: lengths.values().copied().collect(),
        };
        let mut out: Vec<Histogram> =
            providers.iter().take(top_n).map(|(p, _)| to_hist((*p).clone(), &self.by_provider[*p])).collect();
        let mut rest: BTreeMap<usize, u64> = BTreeMap::new();
        for (p, _) in providers.iter().skip(top_n) {
            for (len, n) in &self.by_provider[*p] {
                *rest.entry(*len).or_default() += n;
            }
        }
        out.push(to_hist(OTHERS.to_string(), &rest));
        out
    }

    pub fn tsv(histograms: &[Histogram]) -> String {
        to_tsv(
            &["group", "length", "count"],
            histograms.iter().flat_map(|h| {
                h.edges.iter().zip(&h.counts).map(|(len, n)| vec![h.group.clone(), len.to_string(), n.to_string()])
            }),
        )
    }
}

impl Accumulator for QueryLengths {
    /// `(provider, query)`
    type Item<'a> = (&'a str, &'a str);
    type Output = Self;

    fn add(&mut self, (provider, query): Self::Item<'_>) {
        *self.by_provider.entry(provider.to_string()).or_default().entry(query.chars().count()).or_default() += 1;
    }

    fn merge(&mut self, other: Self) {
        for (provider, lengths) in other.by_provider {
            let mine = self.by_provider.entry(provider).or_default();
            for (len, n) in lengths {
                *mine.entry(len).or_default() += n;
            }
        }
    }

    fn finish(self) -> Self {
        self
    }
}

// --------------------------------------------------------------- coverage

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Urls,
    Queries,
    Serps,
    Results,
}

impl DataType {
    pub const ALL: [DataType; 4] = [DataType::Urls, DataType::Queries, DataType::Serps, DataType::Results];

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Urls => "urls",
            DataType::Queries => "queries",
            DataType::Serps => "serps",
            DataType::Results => "results",
        }
    }
}

/// Capture timestamps bucketed into calendar periods per data type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeCoverage {
    granularity: Granularity,
    counts: BTreeMap<(DataType, Period), u64>,
}

impl TimeCoverage {
    pub fn new(granularity: Granularity) -> Self {
        Self { granularity, counts: BTreeMap::new() }
    }

    pub fn series(&self, kind: DataType) -> TimeSeries {
        TimeSeries { points: self.counts.iter().filter(|((k, _), _)| *k == kind).map(|((_, p), n)| (*p, *n)).collect() }
    }

    pub fn tsv(&self) -> String {
        to_tsv(
            &["type", "period", "count"],
            self.counts.iter().map(|((k, p), n)| vec![k.as_str().to_string(), p.to_string(), n.to_string()]),
        )
    }
}

impl Accumulator for TimeCoverage {
    type Item<'a> = (DataType, &'a Timestamp14);
    type Output = Self;

    fn add(&mut self, (kind, ts): Self::Item<'_>) {
        *self.counts.entry((kind, Period::of(ts, self.granularity))).or_default() += 1;
    }

    fn merge(&mut self, other: Self) {
        assert_eq!(self.granularity, other.granularity, "merging different granularities");
        for (key, n) in other.counts {
            *self.counts.entry(key).or_default() += n;
        }
    }

    fn finish(self) -> Self {
        self
    }
}

// ---------------------------------------------------------------- domains

/// Document-domain counts over results with rank ≤ k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopDomains {
    k: u64,
    counts: HashMap<String, u64>,
    self_refs: u64,
    total: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainShares {
    pub total: u64,
    /// Top domains by share (ties by name), excluding self references.
    pub named: Vec<(String, f64)>,
    pub others: f64,
    pub self_share: f64,
}

impl DomainShares {
    pub fn tsv(&self) -> String {
        let mut rows: Vec<Vec<String>> = self.named.iter().map(|(d, s)| vec![d.clone(), format!("{s:.6}")]).collect();
        rows.push(vec![OTHERS.into(), format!("{:.6}", self.others)]);
        rows.push(vec!["self".into(), format!("{:.6}", self.self_share)]);
        to_tsv(&["domain", "share"], rows)
    }
}

impl TopDomains {
    pub fn new(k: u64) -> Self {
        Self { k, counts: HashMap::new(), self_refs: 0, total: 0 }
    }

    pub fn shares(&self, n: usize) -> DomainShares {
        let share = |c: u64| if self.total == 0 { 0.0 } else { c as f64 / self.total as f64 };
        let mut ranked: Vec<(&String, u64)> = self.counts.iter().map(|(d, c)| (d, *c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let named_count: u64 = ranked.iter().take(n).map(|(_, c)| c).sum();
        let other_count = self.total - self.self_refs - named_count;
        DomainShares {
            total: self.total,
            named: ranked.into_iter().take(n).map(|(d, c)| (d.clone(), share(c))).collect(),
            others: share(other_count),
            self_share: share(self.self_refs),
        }
    }
}

impl Accumulator for TopDomains {
    /// `(rank, document url, registrable domains of the provider)`
    type Item<'a> = (u64, &'a str, &'a [String]);
    type Output = Self;

    fn add(&mut self, (rank, url, own): Self::Item<'_>) {
        if rank == 0 || rank > self.k {
            return;
        }
        self.total += 1;
        // URLs without a host go to "others" under an empty key.
        let domain = registrable_domain_of_url(url).unwrap_or_default();
        if !domain.is_empty() && own.iter().any(|d| *d == domain) {
            self.self_refs += 1;
        } else if !domain.is_empty() {
            *self.counts.entry(domain).or_default() += 1;
        }
    }

    fn merge(&mut self, other: Self) {
        assert_eq!(self.k, other.k, "merging different rank cutoffs");
        self.total += other.total;
        self.self_refs += other.self_refs;
        for (d, n) in other.counts {
            *self.counts.entry(d).or_default() += n;
        }
    }

    fn finish(self) -> Self {
        self
    }
}

// --------------------------------------------------------------- timeline

/// Monthly (or quarterly) counts of queries containing any of the terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermTimeline {
    terms: Vec<(String, Vec<String>)>,
    granularity: Granularity,
    any: BTreeMap<Period, u64>,
    per_term: BTreeMap<(usize, Period), u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermTimelineSeries {
    pub any: TimeSeries,
    pub per_term: Vec<(String, TimeSeries)>,
}

impl TermTimelineSeries {
    pub fn tsv(&self) -> String {
        let mut rows: Vec<Vec<String>> =
            self.any.points.iter().map(|(p, n)| vec!["*".to_string(), p.to_string(), n.to_string()]).collect();
        for (term, series) in &self.per_term {
            rows.extend(series.points.iter().map(|(p, n)| vec![term.clone(), p.to_string(), n.to_string()]));
        }
        to_tsv(&["term", "period", "count"], rows)
    }
}

impl TermTimeline {
    pub fn new(terms: &[String], granularity: Granularity) -> Self {
        Self {
            terms: terms.iter().map(|t| (t.clone(), term_tokens(t))).collect(),
            granularity,
            any: BTreeMap::new(),
            per_term: BTreeMap::new(),
        }
    }

    pub fn series(&self) -> TermTimelineSeries {
        TermTimelineSeries {
            any: TimeSeries { points: self.any.iter().map(|(p, n)| (*p, *n)).collect() },
            per_term: self
                .terms
                .iter()
                .enumerate()
                .map(|(i, (term, _))| {
                    let points =
                        self.per_term.iter().filter(|((t, _), _)| *t == i).map(|((_, p), n)| (*p, *n)).collect();
                    (term.clone(), TimeSeries { points })
                })
                .collect(),
        }
    }
}

impl Accumulator for TermTimeline {
    /// `(query, timestamp)`
    type Item<'a> = (&'a str, &'a Timestamp14);
    type Output = TermTimelineSeries;

    fn add(&mut self, (query, ts): Self::Item<'_>) {
        let normalized = normalize(query);
        let toks = tokens(&normalized);
        let period = Period::of(ts, self.granularity);
        let mut any = false;
        for (i, (_, term)) in self.terms.iter().enumerate() {
            if contains_token_run(&toks, term) {
                any = true;
                *self.per_term.entry((i, period)).or_default() += 1;
            }
        }
        if any {
            *self.any.entry(period).or_default() += 1;
        }
    }

    fn merge(&mut self, other: Self) {
        assert_eq!(self.terms, other.terms, "merging different term lists");
        for (p, n) in other.any {
            *self.any.entry(p).or_default() += n;
        }
        for (k, n) in other.per_term {
            *self.per_term.entry(k).or_default() += n;
        }
    }

    fn finish(self) -> TermTimelineSeries {
        self.series()
    }
}

// ---------------------------------------------------------------- overlap

/// Share of an external query list found verbatim (after normalization)
/// among corpus queries. Memory is bounded by the external list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactOverlap {
    external: Vec<String>,
    wanted: HashSet<String>,
    found: HashSet<String>,
}

impl ExactOverlap {
    pub fn new(external: &[String]) -> Self {
        let external: Vec<String> = external.iter().map(|q| normalize(q)).collect();
        Self { wanted: external.iter().cloned().collect(), external, found: HashSet::new() }
    }

    pub fn matched(&self) -> usize {
        self.external.iter().filter(|q| self.found.contains(*q)).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.external.is_empty() {
            0.0
        } else {
            self.matched() as f64 / self.external.len() as f64
        }
    }

    pub fn tsv(&self) -> String {
        to_tsv(
            &["external", "matched", "fraction"],
            [vec![self.external.len().to_string(), self.matched().to_string(), format!("{:.6}", self.fraction())]],
        )
    }
}

impl Accumulator for ExactOverlap {
    type Item<'a> = &'a str;
    type Output = f64;

    fn add(&mut self, query: &str) {
        let normalized = normalize(query);
        if self.wanted.contains(&normalized) {
            self.found.insert(normalized);
        }
    }

    fn merge(&mut self, other: Self) {
        self.found.extend(other.found);
    }

    fn finish(self) -> f64 {
        self.fraction()
    }
}

// -------------------------------------------------------------- obscenity

/// Queries containing a listed term for their language; untagged queries
/// are checked against the English list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObscenityShare {
    lists: BTreeMap<String, Vec<Vec<String>>>,
    by_provider: BTreeMap<String, (u64, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObscenityShares {
    /// `(provider, matching, total, fraction)`
    pub providers: Vec<(String, u64, u64, f64)>,
    pub overall: f64,
}

impl ObscenityShares {
    pub fn tsv(&self) -> String {
        let total: u64 = self.providers.iter().map(|p| p.2).sum();
        let matching: u64 = self.providers.iter().map(|p| p.1).sum();
        let mut rows: Vec<Vec<String>> = self
            .providers
            .iter()
            .map(|(p, m, t, f)| vec![p.clone(), m.to_string(), t.to_string(), format!("{f:.6}")])
            .collect();
        rows.push(vec!["*".into(), matching.to_string(), total.to_string(), format!("{:.6}", self.overall)]);
        to_tsv(&["provider", "matching", "total", "fraction"], rows)
    }
}

impl ObscenityShare {
    /// `wordlists`: language → terms (single words or phrases).
    pub fn new(wordlists: &BTreeMap<String, Vec<String>>) -> Self {
        Self {
            lists: wordlists
                .iter()
                .map(|(lang, terms)| {
                    let terms = terms.iter().map(|t| term_tokens(t)).filter(|t| !t.is_empty()).collect();
                    (lang.clone(), terms)
                })
                .collect(),
            by_provider: BTreeMap::new(),
        }
    }

    pub fn shares(&self) -> ObscenityShares {
        let frac = |m: u64, t: u64| if t == 0 { 0.0 } else { m as f64 / t as f64 };
        let (m, t) = self.by_provider.values().fold((0, 0), |(am, at), (m, t)| (am + m, at + t));
        ObscenityShares {
            providers: self.by_provider.iter().map(|(p, (m, t))| (p.clone(), *m, *t, frac(*m, *t))).collect(),
            overall: frac(m, t),
        }
    }
}

impl Accumulator for ObscenityShare {
    /// `(provider, query, language)`
    type Item<'a> = (&'a str, &'a str, Option<&'a str>);
    type Output = ObscenityShares;

    fn add(&mut self, (provider, query, language): Self::Item<'_>) {
        let normalized = normalize(query);
        let toks = tokens(&normalized);
        let hit = self
            .lists
            .get(language.unwrap_or("en"))
            .is_some_and(|terms| terms.iter().any(|t| contains_token_run(&toks, t)));
        let entry = self.by_provider.entry(provider.to_string()).or_default();
        entry.1 += 1;
        if hit {
            entry.0 += 1;
        }
    }

    fn merge(&mut self, other: Self) {
        for (p, (m, t)) in other.by_provider {
            let e = self.by_provider.entry(p).or_default();
            e.0 += m;
            e.1 += t;
        }
    }

    fn finish(self) -> ObscenityShares {
        self.shares()
    }
}

// ------------------------------------------------------------- estimation

/// `serps = ⌊planned · availability · parse_rate⌋` and
/// `results = ⌊planned · availability · parse_rate · results_per_serp⌋`.
/// A relative epsilon absorbs binary rounding of decimal rates.
pub fn estimate_totals(planned: u64, availability: f64, parse_rate: f64, results_per_serp: f64) -> (u64, u64) {
    let floor = |x: f64| {
        let eps = 1e-13 * x.abs().max(1.0);
        (x + eps).floor().max(0.0) as u64
    };
    let serps = planned as f64 * availability * parse_rate;
    (floor(serps), floor(serps * results_per_serp))
}
