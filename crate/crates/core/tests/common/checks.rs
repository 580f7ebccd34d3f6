//! Property checks shared by the property suites and the acceptance run.

use std::fs;
use std::path::Path;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha1::{Digest, Sha1};

use aql_core::corpus::ids::{query_id, result_id};
use aql_core::dedup::{select_representative, ExtractedQuery, QueryGroup};
use aql_core::extract::{extract_url, Field, ParserChains, QueryParserSpec};
use aql_core::fetch::warc::{read_warc, scan_file, WarcWriter};
use aql_core::providers::fusion::{fuse_rankings, RankSnapshot};
use aql_core::serp::{infer_continued_ranks, PagePosition, ParsedSerp, SearchResult, SerpPage};
use aql_core::timestamp::Timestamp14;

use super::{
    fusion_denominator, oracle_fusion, oracle_number, oracle_representative, oracle_text, SpecModel, UrlModel,
};

fn build(chain: &[SpecModel], field: Field) -> Vec<QueryParserSpec> {
    chain.iter().map(|s| s.build(field)).collect()
}

/// Extraction over three independent chains equals the model oracle.
pub fn check_chains(
    query: &[SpecModel],
    page: &[SpecModel],
    offset: &[SpecModel],
    url: &UrlModel,
) -> Result<(), TestCaseError> {
    let (q, p, o) = (build(query, Field::Query), build(page, Field::Page), build(offset, Field::Offset));
    let rendered = url.url();
    let got = extract_url(ParserChains { query: &q, page: &p, offset: &o }, &rendered);
    let want_q = oracle_text(query, url);
    let want_p = oracle_number(page, url);
    let want_o = oracle_number(offset, url);
    match got {
        None => prop_assert!(
            want_q.is_none() && want_p.is_none() && want_o.is_none(),
            "nothing extracted from {rendered}, expected {want_q:?} {want_p:?} {want_o:?}"
        ),
        Some(r) => {
            prop_assert_eq!(r.query.clone(), want_q.as_ref().map(|(_, v)| v.clone()), "query of {}", rendered);
            prop_assert_eq!(r.matched_parser.query, want_q.map(|(i, _)| i), "query parser of {}", rendered);
            prop_assert_eq!(r.page, want_p.map(|(_, v)| v), "page of {}", rendered);
            prop_assert_eq!(r.matched_parser.page, want_p.map(|(i, _)| i), "page parser of {}", rendered);
            prop_assert_eq!(r.offset, want_o.map(|(_, v)| v), "offset of {}", rendered);
            prop_assert_eq!(r.matched_parser.offset, want_o.map(|(i, _)| i), "offset parser of {}", rendered);
        }
    }
    Ok(())
}

fn group(members: Vec<ExtractedQuery>) -> QueryGroup {
    QueryGroup { provider: members[0].provider.clone(), query: members[0].query.clone(), members }
}

/// Representative equals the brute-force choice, for the given order, a
/// shuffled order and after swapping two members' timestamps.
pub fn check_dedup(members: &[ExtractedQuery], seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (want_url, want_ts) = oracle_representative(members);
    let rep = select_representative(&group(members.to_vec()));
    prop_assert_eq!(&rep.row.url, &want_url);
    prop_assert_eq!(&rep.row.timestamp, &want_ts);
    prop_assert_eq!(&rep.earliest_timestamp, &want_ts);
    prop_assert_eq!(rep.group_size, members.len());

    let mut shuffled = members.to_vec();
    shuffled.shuffle(&mut rng);
    let again = select_representative(&group(shuffled.clone()));
    prop_assert_eq!(&again, &rep, "member order changed the representative");

    let (i, j) = (rng.gen_range(0..shuffled.len()), rng.gen_range(0..shuffled.len()));
    let (ti, tj) = (shuffled[i].timestamp.clone(), shuffled[j].timestamp.clone());
    shuffled[i].timestamp = tj;
    shuffled[j].timestamp = ti;
    let swapped = select_representative(&group(shuffled.clone()));
    prop_assert_eq!(&swapped.row.url, &want_url, "timestamp swap changed the chosen URL");
    prop_assert_eq!(swapped.earliest_timestamp, oracle_representative(&shuffled).1);
    Ok(())
}

const NAMESPACE_URL: [u8; 16] =
    [0x6b, 0xa7, 0xb8, 0x11, 0x9d, 0xad, 0x11, 0xd1, 0x80, 0xb4, 0x00, 0xc0, 0x4f, 0xd4, 0x30, 0xc8];

/// Name-based UUID computed from its definition: SHA-1 over namespace and
/// name, truncated to 16 bytes, version and variant bits overwritten.
pub fn oracle_uuid_v5(name: &str) -> [u8; 16] {
    let mut h = Sha1::new();
    h.update(NAMESPACE_URL);
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 16];
    out.copy_from_slice(&digest[..16]);
    out[6] = (out[6] & 0x0f) | 0x50;
    out[8] = (out[8] & 0x3f) | 0x80;
    out
}

pub fn check_ids(url: &str, ts: &str, doc_url: &str, rank: u64) -> Result<(), TestCaseError> {
    for (id, name) in
        [(query_id(url, ts), format!("{ts} {url}")), (result_id(doc_url, ts, rank), format!("{ts} {rank} {doc_url}"))]
    {
        let bytes = id.as_bytes();
        prop_assert_eq!(bytes[6] >> 4, 5, "version nibble of {}", id);
        prop_assert_eq!(bytes[8] >> 6, 0b10, "variant bits of {}", id);
        prop_assert_eq!(*bytes, oracle_uuid_v5(&name), "id of {:?}", name);
    }
    prop_assert_eq!(query_id(url, ts), query_id(url, ts));
    Ok(())
}

fn payload_ts(rng: &mut ChaCha8Rng) -> Timestamp14 {
    Timestamp14::parse(&format!(
        "{}{:02}{:02}{:02}{:02}{:02}",
        rng.gen_range(1996..2023),
        rng.gen_range(1..=12),
        rng.gen_range(1..=28),
        rng.gen_range(0..24),
        rng.gen_range(0..60),
        rng.gen_range(0..60)
    ))
    .unwrap()
}

/// Writes every payload (rolling files at `roll_size`), then re-reads the
/// records in shuffled order and by a full scan.
pub fn check_warc_roundtrip(dir: &Path, payloads: &[Vec<u8>], roll_size: u64, seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut writer = WarcWriter::open(dir, "rt", roll_size).unwrap();
    let mut written = Vec::new();
    for (i, payload) in payloads.iter().enumerate() {
        let uri = format!("https://example.org/search?q=p{i}");
        let ts = payload_ts(&mut rng);
        let loc = writer.write_response(&uri, &ts, payload).unwrap();
        written.push((loc, uri, ts, payload));
    }
    drop(writer);
    written.shuffle(&mut rng);
    for (loc, uri, ts, payload) in &written {
        let rec = read_warc(loc).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&rec.payload, *payload);
        prop_assert_eq!(&rec.target_uri, uri);
        prop_assert_eq!(&rec.timestamp, ts);
        prop_assert_eq!(&rec.warc_type, "response");
        prop_assert_eq!(&rec.record_id, &loc.record_id);
    }
    let mut files: Vec<_> = written.iter().map(|(l, ..)| l.file.clone()).collect();
    files.sort();
    files.dedup();
    let scanned: usize = files.iter().map(|f| scan_file(f).unwrap().len()).sum();
    prop_assert_eq!(scanned, payloads.len());
    Ok(())
}

/// Cuts a single-file WARC at `cut` bytes: every record reaching past the
/// cut must fail to read, and a cut inside a record must fail the scan.
pub fn check_warc_truncation(dir: &Path, payloads: &[Vec<u8>], cut_fraction: f64) -> Result<(), TestCaseError> {
    let mut writer = WarcWriter::open(dir, "cut", u64::MAX).unwrap();
    let ts = Timestamp14::parse("20200101000000").unwrap();
    let locs: Vec<_> = payloads
        .iter()
        .enumerate()
        .map(|(i, p)| writer.write_response(&format!("https://example.org/{i}"), &ts, p).unwrap())
        .collect();
    drop(writer);
    let file = locs[0].file.clone();
    let len = fs::metadata(&file).unwrap().len();
    let cut = ((len as f64 * cut_fraction) as u64).clamp(1, len - 1);
    let bytes = fs::read(&file).unwrap();
    fs::write(&file, &bytes[..cut as usize]).unwrap();

    let ends: Vec<u64> = locs.iter().skip(1).map(|l| l.offset).chain([len]).collect();
    for (loc, end) in locs.iter().zip(&ends) {
        let read = read_warc(loc);
        if *end <= cut {
            prop_assert!(read.is_ok(), "intact record at {} unreadable after cut at {}", loc.offset, cut);
        } else {
            prop_assert!(read.is_err(), "record at {}..{} read despite cut at {}", loc.offset, end, cut);
        }
    }
    let on_boundary = locs.iter().any(|l| l.offset == cut);
    if !on_boundary {
        prop_assert!(scan_file(&file).is_err(), "scan accepted a cut at {} of {}", cut, len);
    }
    Ok(())
}

fn snapshots(rankings: &[Vec<String>]) -> Vec<RankSnapshot> {
    rankings
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ranked = r.iter().enumerate().map(|(j, d)| (d.clone(), j as u32 + 1)).collect();
            RankSnapshot::new(format!("s{i}"), ranked).unwrap()
        })
        .collect()
}

fn assert_fused(got: &[(String, f64)], want: &[(String, u128)], denom: u128) -> Result<(), TestCaseError> {
    prop_assert_eq!(got.len(), want.len());
    let exact: std::collections::HashMap<&str, u128> = want.iter().map(|(d, n)| (d.as_str(), *n)).collect();
    for (domain, score) in got {
        let Some(n) = exact.get(domain.as_str()) else {
            return Err(TestCaseError::fail(format!("unexpected domain {domain}")));
        };
        let expected = *n as f64 / denom as f64;
        prop_assert!((score - expected).abs() <= 1e-12 * expected, "{}: {} vs {}", domain, score, expected);
    }
    for pair in got.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (na, nb) = (exact[a.0.as_str()], exact[b.0.as_str()]);
        let ordered = na > nb || (na == nb && a.0 < b.0);
        // Distinct exact scores closer than float resolution may swap.
        let near_tie = na != nb && (a.1 - b.1).abs() <= 1e-12 * a.1;
        prop_assert!(ordered || near_tie, "{:?} before {:?}", a, b);
    }
    Ok(())
}

/// Fusion equals exact brute-force accumulation, and fusing every
/// snapshot twice doubles each score without reordering.
pub fn check_fusion(rankings: &[Vec<String>], cutoff: usize, k: u32) -> Result<(), TestCaseError> {
    let snaps = snapshots(rankings);
    let denom = fusion_denominator(cutoff, k);
    let fused = fuse_rankings(&snaps, cutoff, f64::from(k)).unwrap();
    assert_fused(&fused, &oracle_fusion(rankings, cutoff, k), denom)?;

    let doubled_input: Vec<Vec<String>> = rankings.iter().chain(rankings).cloned().collect();
    let doubled = fuse_rankings(&snapshots(&doubled_input), cutoff, f64::from(k)).unwrap();
    assert_fused(&doubled, &oracle_fusion(&doubled_input, cutoff, k), denom)?;
    prop_assert_eq!(doubled.len(), fused.len());
    for ((d1, s1), (d2, s2)) in fused.iter().zip(&doubled) {
        prop_assert_eq!(d1, d2);
        prop_assert!((2.0 * s1 - s2).abs() <= 1e-12 * s2, "{}: 2×{} ≠ {}", d1, s1, s2);
    }
    Ok(())
}

fn serp_page(page: u64, per_page: u32) -> ParsedSerp {
    ParsedSerp {
        interpreted_query: None,
        results: (1..=per_page)
            .map(|r| SearchResult {
                rank: r,
                title: format!("p{page} r{r}"),
                url: format!("https://example.org/{page}/{r}"),
                snippet: String::new(),
            })
            .collect(),
        matched_spec: 0,
    }
}

/// Full pages at the given (distinct) page numbers merge to global ranks
/// `page * per_page + r`, whichever way positions are given and in
/// whatever order the pages arrive.
pub fn check_ranks(pages: &[u64], per_page: u32, as_offsets: bool, seed: u64) -> Result<(), TestCaseError> {
    let serps: Vec<(u64, ParsedSerp)> = pages.iter().map(|p| (*p, serp_page(*p, per_page))).collect();
    let inputs: Vec<SerpPage<'_>> = serps
        .iter()
        .map(|(p, serp)| SerpPage {
            serp,
            position: if as_offsets { PagePosition::Offset(p * u64::from(per_page)) } else { PagePosition::Page(*p) },
            results_per_page: per_page,
        })
        .collect();
    let merged = infer_continued_ranks(&inputs);
    prop_assert!(merged.conflicts.is_empty());

    let mut want: Vec<(u64, String)> = pages
        .iter()
        .flat_map(|p| (1..=per_page).map(move |r| (p * u64::from(per_page) + u64::from(r), format!("p{p} r{r}"))))
        .collect();
    want.sort();
    let got: Vec<(u64, String)> = merged.results.iter().map(|(g, r)| (*g, r.title.clone())).collect();
    prop_assert_eq!(&got, &want);

    let mut shuffled = inputs.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    prop_assert_eq!(infer_continued_ranks(&shuffled), merged, "page order changed the merge");
    Ok(())
}

fn capture(url: &str, ts: &str) -> aql_core::archive::Capture {
    aql_core::archive::Capture::new(url, ts, 200, "text/html", "").unwrap()
}

fn snapshot_times(backend: &aql_core::archive::replay::ReplayBackend, url: &str) -> Vec<std::time::Duration> {
    use aql_core::archive::replay::RequestKind;
    backend
        .requests()
        .into_iter()
        .filter(|r| matches!(&r.kind, RequestKind::Snapshot { url: u, .. } if u == url))
        .map(|r| r.at)
        .collect()
}

/// Under `max_retries`, a capture failing `max_retries` times is still
/// fetched, one failing once more is unavailable, and either way exactly
/// `max_retries + 1` requests are issued, spaced by the backoff schedule.
/// Permanent failures are never retried.
pub fn check_retry_contract(dir: &Path, max_retries: u32) -> Result<(), TestCaseError> {
    use aql_core::archive::replay::ReplayFixtureBuilder;
    use aql_core::archive::{ArchiveError, FetchOutcome, FetchPolicy};

    let recovers = capture("https://e.org/s?q=recovers", "20200101000000");
    let exhausted = capture("https://e.org/s?q=exhausted", "20200101000000");
    let always = capture("https://e.org/s?q=always", "20200101000000");
    let gone = capture("https://e.org/s?q=gone", "20200101000000");
    let mut b = ReplayFixtureBuilder::create(dir).unwrap();
    b.add(&recovers, Some(b"<html>ok</html>"), Some(max_retries)).unwrap();
    b.add(&exhausted, Some(b"<html>late</html>"), Some(max_retries + 1)).unwrap();
    b.add(&always, None, Some(1)).unwrap();
    b.add(&gone, None, None).unwrap();
    b.finish().unwrap();

    let policy = FetchPolicy { max_retries, ..FetchPolicy::default() };
    let (client, backend, _clock) = super::replay_client(dir, policy.clone());

    match client.fetch_snapshot(&recovers).unwrap() {
        FetchOutcome::Fetched(f) => {
            prop_assert_eq!(f.body, b"<html>ok</html>".to_vec());
            prop_assert_eq!(f.meta.attempts, max_retries + 1);
        }
        other => return Err(TestCaseError::fail(format!("expected a fetch, got {other:?}"))),
    }
    for c in [&exhausted, &always] {
        let out = client.fetch_snapshot(c).unwrap();
        prop_assert!(matches!(out, FetchOutcome::Unavailable { .. }), "{:?}", out);
        prop_assert_eq!(out.attempts(), max_retries + 1);
    }
    let err = client.fetch_snapshot(&gone);
    prop_assert!(matches!(err, Err(ArchiveError::Permanent { .. })), "{:?}", err);

    for c in [&recovers, &exhausted, &always] {
        let times = snapshot_times(&backend, &c.url);
        prop_assert_eq!(times.len() as u32, max_retries + 1, "requests for {}", c.url);
        for (i, pair) in times.windows(2).enumerate() {
            let gap = pair[1] - pair[0];
            let want = policy.backoff(i as u32).max(std::time::Duration::from_secs(1));
            prop_assert_eq!(gap, want, "gap after attempt {} of {}", i, c.url);
        }
    }
    prop_assert_eq!(snapshot_times(&backend, &gone.url).len(), 1);
    Ok(())
}

/// Every approved snapshot with one field edited, paired with the field name
/// the diff is expected to report.
pub fn snapshot_mutations(approved: &str) -> Vec<(String, String)> {
    let lines: Vec<&str> = approved.lines().collect();
    let join = |ls: &[String]| ls.join("\n") + "\n";
    let owned: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::new();
    if lines[0].contains("spec=-") {
        out.push((lines[0].replace("spec=-", "spec=0") + "\nquery:\n", "matched spec".into()));
        return out;
    }
    out.push((approved.replacen("spec=", "spec=9", 1), "matched spec".into()));
    let mut m = owned.clone();
    m[1].push_str(" mutated");
    out.push((join(&m), "query".into()));
    for i in 2..lines.len() {
        let fields: Vec<&str> = lines[i].split('\t').collect();
        for (f, name) in ["rank", "url", "title", "snippet"].iter().enumerate() {
            let mut changed: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
            changed[f] = if f == 0 { "99".into() } else { format!("{}~", changed[f]) };
            let mut m = owned.clone();
            m[i] = changed.join("\t");
            out.push((join(&m), format!("result {} {name}", i - 1)));
        }
    }
    if lines.len() > 2 {
        out.push((join(&owned[..owned.len() - 1]), "result list diverges".into()));
        let mut extra = owned.clone();
        extra.push(format!("{}\thttps://extra.example/\textra\t", lines.len() - 1));
        out.push((join(&extra), "result list diverges".into()));
    }
    out
}

/// Verifies every bundled golden, then every single-field mutation of it in
/// `scratch`. Returns the number of cases and of mutations checked.
pub fn check_approval(scratch: &Path) -> Result<(usize, usize), String> {
    use aql_core::providers::load_registry;
    use aql_core::serp::approval::{approval_verify, load_cases};
    use aql_core::serp::Verdict;

    let registry = load_registry(&super::fixture("e2e/registry.toml")).map_err(|e| e.to_string())?;
    let cases = load_cases(&super::fixture("serps")).map_err(|e| e.to_string())?;
    let mut mutations = 0;
    for case in &cases {
        let specs = &registry.get(&case.provider).ok_or("unknown provider")?.serp_parsers;
        let verdict = approval_verify(specs, &case.fixture, &case.snapshot_path).map_err(|e| e.to_string())?;
        if verdict != Verdict::Pass {
            return Err(format!("{}: {verdict:?}", case.fixture.id));
        }
        let approved = std::fs::read_to_string(&case.snapshot_path).map_err(|e| e.to_string())?;
        for (text, field) in snapshot_mutations(&approved) {
            let path = scratch.join(format!("{}.approved.txt", case.fixture.id));
            std::fs::write(&path, &text).map_err(|e| e.to_string())?;
            match approval_verify(specs, &case.fixture, &path).map_err(|e| e.to_string())? {
                Verdict::Diff(d) if d.field.starts_with(&field) => {}
                Verdict::Diff(d) => return Err(format!("{}: reported {} for {field}", case.fixture.id, d.field)),
                Verdict::Pass => return Err(format!("{}: edit of {field} passed", case.fixture.id)),
            }
            mutations += 1;
        }
    }
    Ok((cases.len(), mutations))
}
