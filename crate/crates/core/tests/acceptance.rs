//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRunner};

use aql_core::analysis::estimate_totals;
use aql_core::archive::FetchPolicy;
use aql_core::corpus::ids::{query_id, result_id};
use aql_core::dedup::DEFAULT_CHUNK_SIZE;
use aql_core::extract::extract_url;
use aql_core::fetch::warc::DEFAULT_ROLL_SIZE;
use aql_core::fetch::DEFAULT_DOWNLOAD_CAP;
use aql_core::pipeline::{run_all, ArchiveSource, CorpusOptions, DownloadOptions, Pipeline};
use aql_core::providers::load_registry;

use common::checks::{
    check_approval, check_chains, check_dedup, check_fusion, check_ids, check_ranks, check_retry_contract,
    check_warc_roundtrip, check_warc_truncation,
};
use common::planted::{check_all, check_domains, planted_domain_results};
use common::{chain, dedup_group, fixture, snapshot_rankings, url_model};

// Pinned tolerances and sizes.
const WORKED_EXAMPLE_BUDGET: Duration = Duration::from_secs(1);
const CHAIN_CASES: u32 = 1_000;
const DEDUP_CASES: u32 = 500;
const ID_PAIRS: usize = 10_000;
const WARC_PAYLOADS: usize = 100;
const TRUNCATION_CASES: u32 = 100;
const E2E_BUDGET: Duration = Duration::from_secs(60);
const PLANTED_SHARE: f64 = 0.029;
const SHARE_TOLERANCE: f64 = 1e-12;
const ANALYSIS_CASES: u32 = 20;
const FUSION_CASES: u32 = 200;

const CHILD_ENV: &str = "AQL_ACCEPTANCE_ID_CHILD";

type Outcome = Result<String, String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn run_cases<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Outcome
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())?;
    Ok(format!("{cases} cases"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn worked_examples() -> Outcome {
    let start = Instant::now();
    let registry = load_registry(&fixture("e2e/registry.toml")).map_err(|e| e.to_string())?;
    let google = registry.get("Google").ok_or("no Google")?;
    let g = extract_url(google.into(), "https://google.com/search?q=covid+19+usa+map&start=10").ok_or("no match")?;
    ensure((g.query.as_deref(), g.page, g.offset) == (Some("covid 19 usa map"), None, Some(10)), || format!("{g:?}"))?;
    let chefkoch = registry.get("Chefkoch").ok_or("no Chefkoch")?;
    let c =
        extract_url(chefkoch.into(), "https://chefkoch.de/rs/s0/backen%20dinkelmehl/Rezepte.html").ok_or("no match")?;
    ensure((c.query.as_deref(), c.page, c.offset) == (Some("backen dinkelmehl"), Some(0), None), || format!("{c:?}"))?;
    let took = start.elapsed();
    ensure(took < WORKED_EXAMPLE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("exact, {took:?}"))
}

fn parser_chains() -> Outcome {
    run_cases(CHAIN_CASES, (chain(), chain(), chain(), url_model()), |(q, p, o, url)| check_chains(&q, &p, &o, &url))
}

fn dedup() -> Outcome {
    run_cases(DEDUP_CASES, (dedup_group(), any::<u64>()), |(members, seed)| check_dedup(&members, seed))
}

/// Fixed inputs whose ids a child process prints for comparison.
fn id_inputs() -> Vec<(String, String, String, u64)> {
    (0..50u64)
        .map(|i| {
            (
                format!("https://e{}.org/s?q=term+{i}", i % 7),
                format!("2019{:02}{:02}120000", 1 + i % 12, 1 + i % 28),
                format!("https://doc{i}.example/page"),
                1 + i % 10,
            )
        })
        .collect()
}

fn id_lines() -> Vec<String> {
    id_inputs()
        .iter()
        .map(|(url, ts, doc, rank)| format!("{} {}", query_id(url, ts), result_id(doc, ts, *rank)))
        .collect()
}

fn identifiers() -> Outcome {
    let mut ids = HashSet::new();
    let mut inputs = HashSet::new();
    let mut rng_cases = runner(1);
    let strategy = prop::collection::vec(
        ("https://[a-z]{1,6}\\.(com|de)/[a-z?=&+0-9]{0,16}", 2000u32..2023, 1u32..=12, 1u64..30),
        ID_PAIRS,
    );
    let pairs = strategy.new_tree(&mut rng_cases).map_err(|e| e.to_string())?.current();
    for (url, year, month, rank) in &pairs {
        let ts = format!("{year}{month:02}15083000");
        let doc = format!("{url}#r{rank}");
        check_ids(url, &ts, &doc, *rank).map_err(|e| e.to_string())?;
        if inputs.insert((url.clone(), ts.clone())) {
            ensure(ids.insert(query_id(url, &ts)), || format!("query id collision at {url} {ts}"))?;
        }
        if inputs.insert((doc.clone(), format!("{ts} {rank}"))) {
            ensure(ids.insert(result_id(&doc, &ts, *rank)), || format!("result id collision at {doc}"))?;
        }
    }
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let child = Command::new(exe).env(CHILD_ENV, "1").output().map_err(|e| e.to_string())?;
    let printed = String::from_utf8_lossy(&child.stdout);
    let theirs: Vec<&str> = printed.lines().collect();
    let ours = id_lines();
    ensure(child.status.success() && theirs == ours, || "ids differ across processes".into())?;
    Ok(format!("{} pairs, {} distinct ids, {} ids equal across processes", pairs.len(), ids.len(), ours.len() * 2))
}

fn warc() -> Outcome {
    let mut r = runner(1);
    let payloads = prop::collection::vec(prop::collection::vec(any::<u8>(), 0..8192), WARC_PAYLOADS)
        .new_tree(&mut r)
        .map_err(|e| e.to_string())?
        .current();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    check_warc_roundtrip(dir.path(), &payloads, 64 * 1024, 11).map_err(|e| e.to_string())?;
    run_cases(
        TRUNCATION_CASES,
        (prop::collection::vec(prop::collection::vec(any::<u8>(), 0..2048), 1..6), 0.0f64..1.0),
        |(p, cut)| {
            let dir = tempfile::tempdir().unwrap();
            check_warc_truncation(dir.path(), &p, cut)
        },
    )?;
    Ok(format!("{WARC_PAYLOADS} payloads byte-exact, {TRUNCATION_CASES} truncations reported"))
}

fn retries() -> Outcome {
    let policy = FetchPolicy::default();
    ensure(policy.max_retries == 10, || format!("default max_retries {}", policy.max_retries))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    check_retry_contract(dir.path(), policy.max_retries).map_err(|e| e.to_string())?;
    Ok(format!("{} attempts before unavailable", policy.max_retries + 1))
}

fn goldens() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (cases, mutations) = check_approval(dir.path())?;
    ensure(cases >= 5, || format!("only {cases} fixtures"))?;
    Ok(format!("{cases} fixtures pass, {mutations} field edits reported"))
}

fn ranks() -> Outcome {
    for (seed, offsets) in [(1, false), (2, true)] {
        check_ranks(&[0, 1], 10, offsets, seed).map_err(|e| e.to_string())?;
        check_ranks(&[1, 0], 10, offsets, seed).map_err(|e| e.to_string())?;
    }
    Ok("ranks 1..20 from page and offset forms, both orders".into())
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

const E2E_COUNTS: [(&str, &[(&str, u64)]); 8] = [
    ("captures fetch", &[("captures", 194), ("malformed_lines", 0), ("prefixes", 3), ("providers", 3)]),
    ("captures filter", &[("captures", 194), ("dropped", 13), ("kept", 181)]),
    ("queries extract", &[("captures", 181), ("no_query", 8), ("queries", 173)]),
    ("queries dedup", &[("queries", 173), ("spill_files", 0), ("unique", 75)]),
    ("serps plan", &[("planned", 65), ("representatives", 75), ("truncated", 10)]),
    ("serps download", &[("planned", 65), ("resumed", 0), ("stored", 63), ("unavailable", 2)]),
    ("serps parse", &[("parsed", 62), ("results", 475), ("serps", 63), ("unparsed", 1)]),
    ("corpus build", &[("queries", 75), ("queries_with_serp", 63), ("results", 475), ("unparsed_serps", 1)]),
];

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let mut trees = Vec::new();
    for _ in 0..2 {
        let work = tempfile::tempdir().map_err(|e| e.to_string())?;
        let registry = work.path().join("registry.toml");
        fs::copy(fixture("e2e/registry.toml"), &registry).map_err(|e| e.to_string())?;
        let out = work.path().join("out");
        let mut p = Pipeline::new(&out);
        p.registry_path = Some(registry);
        p.archive = ArchiveSource::Replay(fixture("e2e/replay"));
        let download = DownloadOptions { with_requests: false, roll_size: DEFAULT_ROLL_SIZE };
        let reports = run_all(&p, DEFAULT_DOWNLOAD_CAP, DEFAULT_CHUNK_SIZE, &download, &CorpusOptions::default())
            .map_err(|e| e.to_string())?;
        ensure(reports.len() == E2E_COUNTS.len(), || format!("{} stages", reports.len()))?;
        for (report, (stage, expected)) in reports.iter().zip(E2E_COUNTS) {
            let expected: BTreeMap<String, u64> = expected.iter().map(|(k, v)| (k.to_string(), *v)).collect();
            ensure(report.stage == stage && !report.skipped && report.counts == expected, || {
                format!("{stage}: got {:?}", report.counts)
            })?;
        }
        trees.push(tree(&out));
    }
    let took = start.elapsed();
    ensure(trees[0] == trees[1], || {
        let differing: Vec<_> = trees[0].keys().filter(|k| trees[1].get(*k) != trees[0].get(*k)).collect();
        format!("runs differ in {differing:?}")
    })?;
    ensure(trees[0].contains_key("corpus/manifest.json"), || "no corpus manifest written".into())?;
    ensure(took < E2E_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{} files byte-identical over two runs, counts pinned, {took:?}", trees[0].len()))
}

fn analysis() -> Outcome {
    run_cases(ANALYSIS_CASES, (any::<u64>(), 1usize..5_000, 0usize..5_000), |(seed, nq, nr)| check_all(seed, nq, nr))?;
    let rs = planted_domain_results(29);
    ensure(rs.len() <= 10_500, || format!("{} records", rs.len()))?;
    let shares = check_domains(&rs, 10, 5, 29).map_err(|e| e.to_string())?;
    let (domain, share) = &shares.named[4];
    ensure(domain == "wikipedia.org" && (share - PLANTED_SHARE).abs() < SHARE_TOLERANCE, || {
        format!("5th is {domain} at {share}")
    })?;
    let estimate = estimate_totals(1000, 0.7, 0.55, 10.6);
    ensure(estimate == (385, 4081), || format!("estimate {estimate:?}"))?;
    Ok(format!("{ANALYSIS_CASES} planted corpora, 5th domain {domain} at {share}, estimate {estimate:?}"))
}

fn fusion() -> Outcome {
    run_cases(FUSION_CASES, snapshot_rankings(5, 20), |snaps| check_fusion(&snaps, 10, 60))
}

fn main() -> ExitCode {
    if std::env::var_os(CHILD_ENV).is_some() {
        for line in id_lines() {
            println!("{line}");
        }
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("worked URL examples", worked_examples),
        ("parser-chain semantics", parser_chains),
        ("dedup determinism", dedup),
        ("UUID conformance", identifiers),
        ("WARC round trip", warc),
        ("retry contract", retries),
        ("SERP parsing goldens", goldens),
        ("continued-rank inference", ranks),
        ("end-to-end golden", end_to_end),
        ("analysis oracles", analysis),
        ("RRF correctness", fusion),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
