//! Planted corpora for the analysis measures and their brute-force
//! oracles. Queries are built from clean word lists; the measures see a
//! decorated rendering (mixed case, punctuation, repeated separators)
//! while the oracles work on the words directly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Debug;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aql_core::analysis::{
    estimate_totals, Accumulator, DataType, ExactOverlap, Granularity, ObscenityShare, QueryLengths, TermTimeline,
    TimeCoverage, TopDomains, OTHERS,
};
use aql_core::timestamp::Timestamp14;

const VOCAB: &[&str] = &[
    "covid", "19", "sars", "cov", "2", "corona", "virus", "map", "weather", "news", "recipe", "bad", "very", "rude",
    "schlecht", "hello", "world", "usa", "berlin", "cake",
];

pub const TERMS: [&str; 3] = ["covid 19", "sars cov 2", "corona virus"];

pub fn wordlists() -> BTreeMap<String, Vec<String>> {
    BTreeMap::from([
        ("en".to_string(), vec!["bad".to_string(), "very rude".to_string()]),
        ("de".to_string(), vec!["schlecht".to_string()]),
    ])
}

#[derive(Debug, Clone)]
pub struct Query {
    pub provider: String,
    pub words: Vec<String>,
    /// What the measures see.
    pub text: String,
    pub timestamp: Timestamp14,
    pub language: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub rank: u64,
    pub url: String,
    /// Registrable domain by construction; empty for host-less URLs.
    pub domain: String,
    pub own: Vec<String>,
}

/// `(host, registrable domain)`, including multi-label public suffixes.
const HOSTS: &[(&str, &str)] = &[
    ("www.google.com", "google.com"),
    ("google.com", "google.com"),
    ("en.wikipedia.org", "wikipedia.org"),
    ("de.wikipedia.org", "wikipedia.org"),
    ("www.bbc.co.uk", "bbc.co.uk"),
    ("news.bbc.co.uk", "bbc.co.uk"),
    ("www.youtube.com", "youtube.com"),
    ("m.facebook.com", "facebook.com"),
    ("www.amazon.co.jp", "amazon.co.jp"),
    ("shop.example.com.au", "example.com.au"),
    ("chefkoch.de", "chefkoch.de"),
];

fn decorate(words: &[String], rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    if rng.gen_bool(0.2) {
        out.push_str(" ¿");
    }
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push_str([" ", "  ", "-", ", ", " / "].choose(rng).unwrap());
        }
        if rng.gen_bool(0.3) {
            out.push_str(&w.to_uppercase());
        } else {
            out.push_str(w);
        }
    }
    if rng.gen_bool(0.2) {
        out.push('!');
    }
    out
}

fn timestamp(rng: &mut ChaCha8Rng) -> Timestamp14 {
    Timestamp14::parse(&format!(
        "{}{:02}{:02}120000",
        rng.gen_range(2015..2023),
        rng.gen_range(1..=12),
        rng.gen_range(1..=28)
    ))
    .unwrap()
}

pub fn queries(seed: u64, n: usize) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Skewed provider sizes so that top-n selection matters.
    let providers: Vec<String> = (0..8).map(|i| format!("prov{i}")).collect();
    let weights = [40, 20, 12, 9, 7, 5, 4, 3];
    (0..n)
        .map(|_| {
            let mut pick = rng.gen_range(0..weights.iter().sum::<u32>());
            let mut p = 0;
            while pick >= weights[p] {
                pick -= weights[p];
                p += 1;
            }
            let words: Vec<String> =
                (0..rng.gen_range(1..=6)).map(|_| VOCAB.choose(&mut rng).unwrap().to_string()).collect();
            let text = decorate(&words, &mut rng);
            let language = [None, Some("en"), Some("de"), Some("fr")].choose(&mut rng).unwrap().map(str::to_string);
            Query { provider: providers[p].clone(), words, text, timestamp: timestamp(&mut rng), language }
        })
        .collect()
}

pub fn results(seed: u64, n: usize) -> Vec<ResultRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n)
        .map(|i| {
            let own = if rng.gen_bool(0.5) { vec!["google.com".to_string()] } else { vec!["chefkoch.de".to_string()] };
            let rank = rng.gen_range(0..=15);
            if rng.gen_bool(0.03) {
                return ResultRow { rank, url: format!("/relative/{i}"), domain: String::new(), own };
            }
            let (host, domain) = HOSTS.choose(&mut rng).unwrap();
            ResultRow { rank, url: format!("https://{host}/page/{i}"), domain: domain.to_string(), own }
        })
        .collect()
}

/// Results with rank ≤ 10 of which exactly 2.9% point at wikipedia.org,
/// the fifth most frequent foreign domain, plus noise beyond the cutoff.
pub fn planted_domain_results(seed: u64) -> Vec<ResultRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let own = vec!["google.com".to_string()];
    let mut plan: Vec<(String, String, u64)> = vec![
        ("www.google.com".into(), "google.com".into(), 1500),
        ("www.youtube.com".into(), "youtube.com".into(), 800),
        ("m.facebook.com".into(), "facebook.com".into(), 500),
        ("www.amazon.com".into(), "amazon.com".into(), 400),
        ("twitter.com".into(), "twitter.com".into(), 350),
        ("en.wikipedia.org".into(), "wikipedia.org".into(), 200),
        ("de.wikipedia.org".into(), "wikipedia.org".into(), 90),
    ];
    for i in 0..40 {
        plan.push((format!("www.site{i:02}.co.uk"), format!("site{i:02}.co.uk"), 154));
    }
    let mut out = Vec::new();
    for (host, domain, count) in plan {
        for j in 0..count {
            out.push(ResultRow {
                rank: rng.gen_range(1..=10),
                url: format!("https://{host}/doc/{j}"),
                domain: domain.clone(),
                own: own.clone(),
            });
        }
    }
    // Beyond the cutoff: must not count.
    for j in 0..500 {
        out.push(ResultRow {
            rank: rng.gen_range(11..=20),
            url: format!("https://en.wikipedia.org/beyond/{j}"),
            domain: "wikipedia.org".into(),
            own: own.clone(),
        });
    }
    out.shuffle(&mut rng);
    out
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

/// Accumulates `items` in one pass and again over random chunks merged in
/// random order; both must agree.
fn one_and_split<A, T>(
    make: impl Fn() -> A,
    items: &[T],
    add: impl Fn(&mut A, &T),
    seed: u64,
) -> Result<A, TestCaseError>
where
    A: Accumulator + PartialEq + Debug,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut whole = make();
    for item in items {
        add(&mut whole, item);
    }
    let chunks = rng.gen_range(1..=5);
    let mut parts: Vec<A> = (0..chunks).map(|_| make()).collect();
    for item in items {
        let c = rng.gen_range(0..chunks);
        add(&mut parts[c], item);
    }
    parts.shuffle(&mut rng);
    let mut merged = parts.pop().unwrap();
    for p in parts {
        merged.merge(p);
    }
    prop_assert_eq!(&merged, &whole, "split/merge disagrees with one pass");
    Ok(whole)
}

fn window_match(words: &[String], term: &str) -> bool {
    let needle: Vec<&str> = term.split(' ').collect();
    words.windows(needle.len()).any(|w| w.iter().map(String::as_str).eq(needle.iter().copied()))
}

fn month_label(ts: &Timestamp14) -> String {
    let s = ts.as_str();
    format!("{}-{}", &s[..4], &s[4..6])
}

fn quarter_label(ts: &Timestamp14) -> String {
    let s = ts.as_str();
    let month: u32 = s[4..6].parse().unwrap();
    format!("{}Q{}", &s[..4], (month + 2) / 3)
}

pub fn check_lengths(qs: &[Query], top_n: usize, seed: u64) -> Result<(), TestCaseError> {
    let acc = one_and_split(QueryLengths::default, qs, |a, q| a.add((&q.provider, &q.text)), seed)?;
    let got = acc.histograms(top_n);

    let mut per: BTreeMap<&str, BTreeMap<usize, u64>> = BTreeMap::new();
    for q in qs {
        *per.entry(&q.provider).or_default().entry(q.text.chars().count()).or_default() += 1;
    }
    let mut order: Vec<(&str, u64)> = per.iter().map(|(p, h)| (*p, h.values().sum())).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut want: Vec<(String, Vec<(usize, u64)>)> = order
        .iter()
        .take(top_n)
        .map(|(p, _)| (p.to_string(), per[p].iter().map(|(l, c)| (*l, *c)).collect()))
        .collect();
    let mut rest: BTreeMap<usize, u64> = BTreeMap::new();
    for (p, _) in order.iter().skip(top_n) {
        for (l, c) in &per[p] {
            *rest.entry(*l).or_default() += c;
        }
    }
    want.push((OTHERS.to_string(), rest.into_iter().collect()));

    let got: Vec<(String, Vec<(usize, u64)>)> =
        got.into_iter().map(|h| (h.group, h.edges.into_iter().zip(h.counts).collect())).collect();
    prop_assert_eq!(got, want);
    Ok(())
}

pub fn check_coverage(qs: &[Query], rs: &[ResultRow], seed: u64) -> Result<(), TestCaseError> {
    // Results borrow the timestamp of a query, as in the corpus.
    let items: Vec<(DataType, Timestamp14)> = qs
        .iter()
        .map(|q| (DataType::Queries, q.timestamp.clone()))
        .chain(qs.iter().step_by(2).map(|q| (DataType::Urls, q.timestamp.clone())))
        .chain(rs.iter().zip(qs.iter().cycle()).map(|(_, q)| (DataType::Results, q.timestamp.clone())))
        .collect();
    let acc = one_and_split(|| TimeCoverage::new(Granularity::Quarter), &items, |a, (k, t)| a.add((*k, t)), seed)?;
    for kind in DataType::ALL {
        let mut want: BTreeMap<String, u64> = BTreeMap::new();
        for (k, t) in &items {
            if *k == kind {
                *want.entry(quarter_label(t)).or_default() += 1;
            }
        }
        let got: BTreeMap<String, u64> = acc.series(kind).labels().into_iter().collect();
        prop_assert_eq!(got, want, "coverage of {}", kind.as_str());
    }
    Ok(())
}

pub fn check_timeline(qs: &[Query], seed: u64) -> Result<(), TestCaseError> {
    let terms: Vec<String> = TERMS.iter().map(|t| t.to_string()).collect();
    let acc = one_and_split(
        || TermTimeline::new(&terms, Granularity::Month),
        qs,
        |a, q| a.add((&q.text, &q.timestamp)),
        seed,
    )?;
    let series = acc.finish();
    let mut any: BTreeMap<String, u64> = BTreeMap::new();
    let mut per: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); terms.len()];
    for q in qs {
        let hits: Vec<bool> = TERMS.iter().map(|t| window_match(&q.words, t)).collect();
        for (i, h) in hits.iter().enumerate() {
            if *h {
                *per[i].entry(month_label(&q.timestamp)).or_default() += 1;
            }
        }
        if hits.iter().any(|h| *h) {
            *any.entry(month_label(&q.timestamp)).or_default() += 1;
        }
    }
    prop_assert_eq!(series.any.labels().into_iter().collect::<BTreeMap<_, _>>(), any);
    for (i, (term, s)) in series.per_term.iter().enumerate() {
        prop_assert_eq!(term, TERMS[i]);
        prop_assert_eq!(&s.labels().into_iter().collect::<BTreeMap<_, _>>(), &per[i], "term {}", term);
    }
    Ok(())
}

/// External list: decorated copies of some corpus queries plus queries
/// absent from the corpus, with duplicates.
pub fn check_overlap(qs: &[Query], seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let present: BTreeSet<Vec<String>> = qs.iter().map(|q| q.words.clone()).collect();
    let mut external: Vec<Vec<String>> = Vec::new();
    for q in qs.iter().take(qs.len() / 3) {
        external.push(q.words.clone());
    }
    for i in 0..(qs.len() / 4 + 1) {
        external.push(vec!["absent".to_string(), format!("q{i}")]);
    }
    if let Some(first) = external.first().cloned() {
        external.push(first);
    }
    external.shuffle(&mut rng);
    let rendered: Vec<String> = external.iter().map(|w| decorate(w, &mut rng)).collect();
    let acc = one_and_split(|| ExactOverlap::new(&rendered), qs, |a, q| a.add(&q.text), seed)?;
    let matched = external.iter().filter(|w| present.contains(*w)).count();
    prop_assert_eq!(acc.matched(), matched);
    let want = matched as f64 / external.len() as f64;
    prop_assert!((acc.finish() - want).abs() < 1e-15);
    Ok(())
}

pub fn check_obscenity(qs: &[Query], seed: u64) -> Result<(), TestCaseError> {
    let lists = wordlists();
    let acc = one_and_split(
        || ObscenityShare::new(&lists),
        qs,
        |a, q| a.add((&q.provider, &q.text, q.language.as_deref())),
        seed,
    )?;
    let shares = acc.finish();
    let mut want: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for q in qs {
        let lang = q.language.as_deref().unwrap_or("en");
        let hit = lists.get(lang).is_some_and(|terms| terms.iter().any(|t| window_match(&q.words, t)));
        let e = want.entry(q.provider.clone()).or_default();
        e.1 += 1;
        e.0 += u64::from(hit);
    }
    let got: BTreeMap<String, (u64, u64)> = shares.providers.iter().map(|(p, m, t, _)| (p.clone(), (*m, *t))).collect();
    prop_assert_eq!(&got, &want);
    for (p, m, t, f) in &shares.providers {
        prop_assert!((f - *m as f64 / *t as f64).abs() < 1e-15, "fraction of {}", p);
    }
    let (m, t) = want.values().fold((0, 0), |(a, b), (m, t)| (a + m, b + t));
    prop_assert!((shares.overall - m as f64 / t.max(1) as f64).abs() < 1e-15);
    Ok(())
}

/// Domain shares of `rs` at cutoff `k` with `n` named domains.
pub fn check_domains(
    rs: &[ResultRow],
    k: u64,
    n: usize,
    seed: u64,
) -> Result<aql_core::analysis::DomainShares, TestCaseError> {
    let acc = one_and_split(|| TopDomains::new(k), rs, |a, r| a.add((r.rank, &r.url, &r.own)), seed)?;
    let shares = acc.shares(n);

    let counted: Vec<&ResultRow> = rs.iter().filter(|r| r.rank >= 1 && r.rank <= k).collect();
    let total = counted.len() as u64;
    let self_refs = counted.iter().filter(|r| !r.domain.is_empty() && r.own.contains(&r.domain)).count() as u64;
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for r in &counted {
        if !r.domain.is_empty() && !r.own.contains(&r.domain) {
            *counts.entry(&r.domain).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let share = |c: u64| if total == 0 { 0.0 } else { c as f64 / total as f64 };
    let named: Vec<(String, f64)> = ranked.iter().take(n).map(|(d, c)| (d.to_string(), share(*c))).collect();
    let named_count: u64 = ranked.iter().take(n).map(|(_, c)| c).sum();

    prop_assert_eq!(shares.total, total);
    prop_assert_eq!(shares.named.len(), named.len());
    for ((gd, gs), (wd, ws)) in shares.named.iter().zip(&named) {
        prop_assert_eq!(gd, wd);
        prop_assert!((gs - ws).abs() < 1e-15, "{}: {} vs {}", gd, gs, ws);
    }
    prop_assert!((shares.self_share - share(self_refs)).abs() < 1e-15);
    prop_assert!((shares.others - share(total - self_refs - named_count)).abs() < 1e-15);
    Ok(shares)
}

/// Integer oracle for the estimate: rates given in percent and tenths.
pub fn check_estimate(
    planned: u64,
    availability_pct: u64,
    parse_pct: u64,
    rps_tenths: u64,
) -> Result<(), TestCaseError> {
    let got =
        estimate_totals(planned, availability_pct as f64 / 100.0, parse_pct as f64 / 100.0, rps_tenths as f64 / 10.0);
    let serps = planned * availability_pct * parse_pct / 10_000;
    let results = planned * availability_pct * parse_pct * rps_tenths / 100_000;
    prop_assert_eq!(got, (serps, results));
    Ok(())
}

/// Every measure against its oracle over one planted corpus.
pub fn check_all(seed: u64, n_queries: usize, n_results: usize) -> Result<(), TestCaseError> {
    let qs = queries(seed, n_queries);
    let rs = results(seed, n_results);
    check_lengths(&qs, 5, seed)?;
    check_lengths(&qs, 2, seed + 1)?;
    check_coverage(&qs, &rs, seed)?;
    check_timeline(&qs, seed)?;
    check_overlap(&qs, seed)?;
    check_obscenity(&qs, seed)?;
    check_domains(&rs, 10, 5, seed)?;
    check_domains(&rs, 3, 2, seed + 1)?;
    Ok(())
}

pub fn expect(cond: bool, msg: impl Into<String>) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(fail(msg.into()))
    }
}
