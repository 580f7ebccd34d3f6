use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::*;
use crate::analysis::{
    corpus_queries, corpus_results, estimate_totals, Accumulator, DataType, ExactOverlap, Granularity, ObscenityShare,
    QueryLengths, TermTimeline, TimeCoverage, TopDomains,
};
use crate::archive::Capture;
use crate::corpus::emit::MANIFEST_FILE as CORPUS_MANIFEST;
use crate::corpus::{
    emit_corpus, enrich_nearest_snapshots, parse_download, provider_slug, CorpusBuilder, HeuristicDetector,
    LanguageDetector, ParsedSerpRecord,
};
use crate::dedup::{select_representative, ExternalGrouper, ExtractedQuery, Representative};
use crate::domain::registrable_domain;
use crate::extract::extract;
use crate::fetch::{download_to_warc, index_responses, plan_downloads, DownloadRecord, PlanEntry, WarcWriter};
use crate::jsonl::{read_records, JsonlError, JsonlWriter};
use crate::providers::{fuse_rankings, load_snapshot};
use crate::serp::approval::{approval_record, approval_verify, load_cases, Verdict};

pub const CAPTURES_FILE: &str = "captures.jsonl";
pub const EXTRACTED_FILE: &str = "extracted.jsonl";
pub const REPRESENTATIVES_FILE: &str = "representatives.jsonl";
pub const PLAN_FILE: &str = "plan.jsonl";
pub const DOWNLOADS_FILE: &str = "downloads.jsonl";
pub const PARSED_FILE: &str = "serps.jsonl";
pub const WARC_DIR: &str = "warc";
pub const RESULT_TSV: &str = "result.tsv";

/// One listed capture, tagged with the provider whose prefix produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureRow {
    pub provider: String,
    #[serde(flatten)]
    pub capture: Capture,
}

fn io_failed(context: &Path) -> impl Fn(std::io::Error) -> StageError + '_ {
    move |e| StageError::Failed(format!("{}: {e}", context.display()))
}

fn jsonl_failed(e: JsonlError) -> StageError {
    StageError::Failed(e.to_string())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StageError> {
    read_records(path).map_err(jsonl_failed)?.collect::<Result<_, _>>().map_err(jsonl_failed)
}

/// Writes through a `.partial` file so the final name only ever holds a
/// complete file.
fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<u64, StageError> {
    let tmp = path.with_extension("jsonl.partial");
    let mut writer = JsonlWriter::create(&tmp).map_err(io_failed(&tmp))?;
    for row in rows {
        writer.write(&row).map_err(io_failed(&tmp))?;
    }
    let count = writer.count();
    writer.finish().map_err(io_failed(&tmp))?;
    fs::rename(&tmp, path).map_err(io_failed(path))?;
    Ok(count)
}

fn counts<const N: usize>(pairs: [(&str, u64); N]) -> BTreeMap<String, u64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone)]
pub struct FuseOptions {
    pub snapshots: Vec<PathBuf>,
    pub cutoff: usize,
    pub k: f64,
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct FetchOptions {
    /// Restrict listing to these providers; all active ones when empty.
    pub providers: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DownloadOptions {
    pub with_requests: bool,
    pub roll_size: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusOptions {
    pub nearest_snapshots: bool,
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum Analysis {
    Lengths { top_n: usize },
    Coverage { granularity: Granularity },
    Domains { k: u64, n: usize },
    Timeline { terms: Vec<String>, granularity: Granularity },
    Overlap { external: PathBuf },
    Obscenity { wordlists: PathBuf },
    Estimate { availability: f64, parse_rate: f64, results_per_serp: f64, planned: Option<u64> },
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Analysis::Lengths { .. } => "lengths",
            Analysis::Coverage { .. } => "coverage",
            Analysis::Domains { .. } => "domains",
            Analysis::Timeline { .. } => "timeline",
            Analysis::Overlap { .. } => "overlap",
            Analysis::Obscenity { .. } => "obscenity",
            Analysis::Estimate { .. } => "estimate",
        }
    }
}

/// Outcome of an approval run: per case id, `None` for a pass.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ApprovalOutcome {
    pub cases: Vec<(String, Option<String>)>,
}

impl ApprovalOutcome {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|(_, d)| d.is_none())
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, StageError> {
    let file = fs::File::open(path).map_err(|e| StageError::Usage(format!("{}: {e}", path.display())))?;
    BufReader::new(file)
        .lines()
        .map(|l| l.map(|l| l.trim().to_string()).map_err(io_failed(path)))
        .filter(|l| !matches!(l, Ok(s) if s.is_empty() || s.starts_with('#')))
        .collect()
}

impl Pipeline {
    pub fn providers_validate(&self) -> Result<StageReport, StageError> {
        let registry = self.registry()?;
        let active = registry.active().count() as u64;
        let total = registry.len() as u64;
        tracing::info!(providers = total, active, "registry valid");
        Ok(StageReport {
            stage: "providers validate".into(),
            skipped: false,
            counts: counts([("providers", total), ("active", active), ("excluded", total - active)]),
        })
    }

    pub fn providers_fuse(&self, opts: &FuseOptions) -> Result<StageReport, StageError> {
        if opts.snapshots.is_empty() {
            return Err(StageError::Usage("providers fuse needs at least one --snapshot".into()));
        }
        let mut hashes = Vec::new();
        for path in &opts.snapshots {
            let bytes = fs::read(path).map_err(|e| StageError::Usage(format!("{}: {e}", path.display())))?;
            hashes.push(sha256_hex(&bytes));
        }
        let dir = self.stage_dir(PROVIDERS_FUSE);
        let config = json!({"snapshots": hashes, "cutoff": opts.cutoff, "k": opts.k, "top": opts.top});
        let hash = match self.begin(PROVIDERS_FUSE.name, &dir, &config, &[])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let snapshots = opts
            .snapshots
            .iter()
            .map(|p| load_snapshot(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| StageError::Failed(e.to_string()))?;
        let mut fused = fuse_rankings(&snapshots, opts.cutoff, opts.k).map_err(|e| StageError::Usage(e.to_string()))?;
        if let Some(top) = opts.top {
            fused.truncate(top);
        }
        let out = dir.join("fused.tsv");
        let text = crate::analysis::to_tsv(
            &["rank", "domain", "score"],
            fused.iter().enumerate().map(|(i, (d, s))| vec![(i + 1).to_string(), d.clone(), format!("{s:.12}")]),
        );
        fs::write(&out, text).map_err(io_failed(&out))?;
        self.complete(
            PROVIDERS_FUSE.name,
            &dir,
            hash,
            opts.snapshots.iter().map(|p| self.rel(p)).collect(),
            vec![self.rel(&out)],
            counts([("snapshots", snapshots.len() as u64), ("domains", fused.len() as u64)]),
        )
    }

    /// Lists captures for every URL prefix of the selected providers. Each
    /// finished prefix is kept under `raw/`, so a failed run resumes at the
    /// first unfinished prefix.
    pub fn captures_fetch(&self, opts: &FetchOptions) -> Result<StageReport, StageError> {
        let registry = self.registry()?;
        for name in &opts.providers {
            if registry.get(name).is_none() {
                return Err(StageError::Usage(format!("unknown provider {name:?}")));
            }
        }
        let mut selected: Vec<String> = opts.providers.clone();
        selected.sort();
        let dir = self.stage_dir(CAPTURES_FETCH);
        let config = json!({"registry": self.registry_hash()?, "archive": self.archive, "providers": selected});
        let hash = match self.begin(CAPTURES_FETCH.name, &dir, &config, &[])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let raw = dir.join("raw").join(&hash[..16]);
        fs::create_dir_all(&raw).map_err(io_failed(&raw))?;
        let client = self.client()?;

        let providers: Vec<_> =
            registry.active().filter(|p| opts.providers.is_empty() || opts.providers.contains(&p.name)).collect();
        let mut parts = Vec::new();
        let mut malformed = 0u64;
        for provider in &providers {
            for (idx, prefix) in provider.url_prefixes.iter().enumerate() {
                let part = raw.join(format!("{}-{idx:03}.jsonl", provider_slug(&provider.name)));
                parts.push((provider.name.clone(), part.clone()));
                if part.exists() {
                    continue;
                }
                let stream =
                    client.list_captures(prefix).map_err(|e| StageError::failed(&format!("listing {prefix}"), e))?;
                let mut rows = Vec::new();
                for item in stream {
                    match item {
                        Ok(capture) => rows.push(CaptureRow { provider: provider.name.clone(), capture }),
                        Err(crate::archive::ArchiveError::Malformed { line }) => {
                            malformed += 1;
                            tracing::warn!(prefix = %prefix, line = %line, "skipping malformed listing line");
                        }
                        Err(e) => return Err(StageError::failed(&format!("listing {prefix}"), e)),
                    }
                }
                tracing::info!(provider = %provider.name, prefix = %prefix, captures = rows.len(), "prefix listed");
                write_jsonl(&part, rows)?;
            }
        }

        // Overlapping prefixes of one provider may list a capture twice.
        let mut seen: HashSet<(String, String, String)> = HashSet::new();
        let mut merged = Vec::new();
        for (_, part) in &parts {
            for row in read_jsonl::<CaptureRow>(part)? {
                if seen.insert((row.provider.clone(), row.capture.url.clone(), row.capture.timestamp.to_string())) {
                    merged.push(row);
                }
            }
        }
        let out = dir.join(CAPTURES_FILE);
        let n = write_jsonl(&out, merged)?;
        self.complete(
            CAPTURES_FETCH.name,
            &dir,
            hash,
            vec![],
            vec![self.rel(&out)],
            counts([
                ("providers", providers.len() as u64),
                ("prefixes", parts.len() as u64),
                ("captures", n),
                ("malformed_lines", malformed),
            ]),
        )
    }

    pub fn captures_filter(&self) -> Result<StageReport, StageError> {
        let upstream = self.require(CAPTURES_FETCH)?;
        let dir = self.stage_dir(CAPTURES_FILTER);
        let hash = match self.begin(CAPTURES_FILTER.name, &dir, &json!({}), &[&upstream])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let input = self.stage_dir(CAPTURES_FETCH).join(CAPTURES_FILE);
        let rows: Vec<CaptureRow> = read_jsonl(&input)?;
        let total = rows.len() as u64;
        let out = dir.join(CAPTURES_FILE);
        let kept = write_jsonl(&out, rows.into_iter().filter(|r| r.capture.is_successful_html()))?;
        self.complete(
            CAPTURES_FILTER.name,
            &dir,
            hash,
            vec![self.rel(&input)],
            vec![self.rel(&out)],
            counts([("captures", total), ("kept", kept), ("dropped", total - kept)]),
        )
    }

    pub fn queries_extract(&self) -> Result<StageReport, StageError> {
        let upstream = self.require(CAPTURES_FILTER)?;
        let registry = self.registry()?;
        let dir = self.stage_dir(QUERIES_EXTRACT);
        let config = json!({"registry": self.registry_hash()?});
        let hash = match self.begin(QUERIES_EXTRACT.name, &dir, &config, &[&upstream])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let input = self.stage_dir(CAPTURES_FILTER).join(CAPTURES_FILE);
        let rows: Vec<CaptureRow> = read_jsonl(&input)?;
        let total = rows.len() as u64;
        let mut extracted = Vec::new();
        for row in &rows {
            let Some(provider) = registry.get(&row.provider) else {
                continue;
            };
            if let Some(result) = extract(provider, &row.capture) {
                if let Some(q) = ExtractedQuery::new(&row.provider, &row.capture, &result) {
                    extracted.push(q);
                }
            }
        }
        let out = dir.join(EXTRACTED_FILE);
        let n = write_jsonl(&out, extracted)?;
        self.complete(
            QUERIES_EXTRACT.name,
            &dir,
            hash,
            vec![self.rel(&input)],
            vec![self.rel(&out)],
            counts([("captures", total), ("queries", n), ("no_query", total - n)]),
        )
    }

    pub fn queries_dedup(&self, chunk_size: usize) -> Result<StageReport, StageError> {
        let upstream = self.require(QUERIES_EXTRACT)?;
        let dir = self.stage_dir(QUERIES_DEDUP);
        // The chunk size changes only memory use, not the output.
        let hash = match self.begin(QUERIES_DEDUP.name, &dir, &json!({}), &[&upstream])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let input = self.stage_dir(QUERIES_EXTRACT).join(EXTRACTED_FILE);
        let spill = dir.join("spill");
        let _ = fs::remove_dir_all(&spill);
        let mut grouper = ExternalGrouper::new(&spill, chunk_size).map_err(|e| StageError::Failed(e.to_string()))?;
        let mut total = 0u64;
        for row in read_records::<ExtractedQuery>(&input).map_err(jsonl_failed)? {
            grouper.push(row.map_err(jsonl_failed)?).map_err(|e| StageError::Failed(e.to_string()))?;
            total += 1;
        }
        let spills = grouper.spill_count() as u64;
        let mut reps: Vec<Representative> = Vec::new();
        for group in grouper.finish().map_err(|e| StageError::Failed(e.to_string()))? {
            let group = group.map_err(|e| StageError::Failed(e.to_string()))?;
            reps.push(select_representative(&group));
        }
        let _ = fs::remove_dir_all(&spill);
        let out = dir.join(REPRESENTATIVES_FILE);
        let n = write_jsonl(&out, &reps)?;
        self.complete(
            QUERIES_DEDUP.name,
            &dir,
            hash,
            vec![self.rel(&input)],
            vec![self.rel(&out)],
            counts([("queries", total), ("unique", n), ("spill_files", spills)]),
        )
    }

    pub fn serps_plan(&self, default_cap: u64) -> Result<StageReport, StageError> {
        let upstream = self.require(QUERIES_DEDUP)?;
        let registry = self.registry()?;
        let dir = self.stage_dir(SERPS_PLAN);
        let config = json!({"registry": self.registry_hash()?, "default_cap": default_cap});
        let hash = match self.begin(SERPS_PLAN.name, &dir, &config, &[&upstream])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let input = self.stage_dir(QUERIES_DEDUP).join(REPRESENTATIVES_FILE);
        let reps: Vec<Representative> = read_jsonl(&input)?;
        let plan = plan_downloads(reps.iter().map(PlanEntry::from_representative), &registry, default_cap);
        let out = dir.join(PLAN_FILE);
        let n = write_jsonl(&out, &plan.entries)?;
        let mut c = counts([("representatives", reps.len() as u64), ("planned", n)]);
        c.insert("truncated".into(), plan.truncated.values().sum());
        self.complete(SERPS_PLAN.name, &dir, hash, vec![self.rel(&input)], vec![self.rel(&out)], c)
    }

    /// Downloads planned SERPs into `warc/`. Records already present (from
    /// an interrupted run) are reused, not fetched again.
    pub fn serps_download(&self, opts: &DownloadOptions) -> Result<StageReport, StageError> {
        let upstream = self.require(SERPS_PLAN)?;
        let dir = self.stage_dir(SERPS_DOWNLOAD);
        let config = json!({"archive": self.archive, "max_retries": self.policy.max_retries, "with_requests": opts.with_requests, "roll_size": opts.roll_size});
        let hash = match self.begin(SERPS_DOWNLOAD.name, &dir, &config, &[&upstream])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let input = self.stage_dir(SERPS_PLAN).join(PLAN_FILE);
        let plan: Vec<PlanEntry> = read_jsonl(&input)?;
        let warc_dir = dir.join(WARC_DIR);
        let existing: HashMap<String, crate::fetch::WarcLocation> = index_responses(&warc_dir)
            .map_err(|e| StageError::Failed(e.to_string()))?
            .into_iter()
            .map(|l| (l.record_id.clone(), l))
            .collect();
        let mut writer = WarcWriter::open(&warc_dir, "serps", opts.roll_size)
            .map_err(|e| StageError::Failed(e.to_string()))?
            .with_requests(opts.with_requests);
        let client = self.client()?;
        let mut records = Vec::with_capacity(plan.len());
        let summary = download_to_warc(&plan, &client, &mut writer, &existing, self.workers, |r| {
            if let crate::fetch::DownloadStatus::Unavailable { reason, .. } = &r.status {
                tracing::warn!(url = %r.entry.url, timestamp = %r.entry.timestamp, reason = %reason, "snapshot unavailable");
            }
            let mut r = r.clone();
            if let crate::fetch::DownloadStatus::Stored { location, .. } = &mut r.status {
                location.file = location.file.strip_prefix(&dir).unwrap_or(&location.file).to_path_buf();
            }
            records.push(r);
        })
        .map_err(|e| StageError::Failed(e.to_string()))?;
        let out = dir.join(DOWNLOADS_FILE);
        write_jsonl(&out, &records)?;
        self.complete(
            SERPS_DOWNLOAD.name,
            &dir,
            hash,
            vec![self.rel(&input)],
            vec![self.rel(&out), self.rel(&warc_dir)],
            counts([
                ("planned", plan.len() as u64),
                ("stored", summary.stored + summary.resumed),
                ("resumed", summary.resumed),
                ("unavailable", summary.unavailable),
            ]),
        )
    }

    pub fn serps_parse(&self) -> Result<StageReport, StageError> {
        let upstream = self.require(SERPS_DOWNLOAD)?;
        let registry = self.registry()?;
        let dir = self.stage_dir(SERPS_PARSE);
        let config = json!({"registry": self.registry_hash()?});
        let hash = match self.begin(SERPS_PARSE.name, &dir, &config, &[&upstream])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let input = self.stage_dir(SERPS_DOWNLOAD).join(DOWNLOADS_FILE);
        let serps_dir = self.stage_dir(SERPS_DOWNLOAD);
        let mut downloads: Vec<DownloadRecord> = read_jsonl(&input)?;
        for record in &mut downloads {
            if let crate::fetch::DownloadStatus::Stored { location, .. } = &mut record.status {
                location.file = serps_dir.join(&location.file);
            }
        }
        let mut parsed = Vec::new();
        let (mut stored, mut ok, mut results) = (0u64, 0u64, 0u64);
        for record in &downloads {
            let Some(provider) = registry.get(&record.entry.provider) else {
                continue;
            };
            if let Some(row) = parse_download(provider, record).map_err(|e| StageError::Failed(e.to_string()))? {
                stored += 1;
                if let Some(serp) = &row.serp {
                    ok += 1;
                    results += serp.results.len() as u64;
                }
                parsed.push(row);
            }
        }
        let out = dir.join(PARSED_FILE);
        write_jsonl(&out, &parsed)?;
        self.complete(
            SERPS_PARSE.name,
            &dir,
            hash,
            vec![self.rel(&input)],
            vec![self.rel(&out)],
            counts([("serps", stored), ("parsed", ok), ("unparsed", stored - ok), ("results", results)]),
        )
    }

    pub fn corpus_build(&self, opts: &CorpusOptions) -> Result<StageReport, StageError> {
        let dedup = self.require(QUERIES_DEDUP)?;
        let parse = self.require(SERPS_PARSE)?;
        let registry = self.registry()?;
        let dir = self.stage_dir(CORPUS_BUILD);
        let stopwords_hash = match &opts.stopwords {
            Some(d) => {
                let mut names: Vec<_> = fs::read_dir(d)
                    .map_err(|e| StageError::Usage(format!("{}: {e}", d.display())))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .collect();
                names.sort();
                let mut material = Vec::new();
                for n in names {
                    material.extend(fs::read(&n).unwrap_or_default());
                }
                Some(sha256_hex(&material))
            }
            None => None,
        };
        let config = json!({
            "registry": self.registry_hash()?,
            "wayback_base": self.archive.wayback_base(),
            "nearest": opts.nearest_snapshots.then_some(&self.archive),
            "stopwords": stopwords_hash,
        });
        let hash = match self.begin(CORPUS_BUILD.name, &dir, &config, &[&dedup, &parse])? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let reps_path = self.stage_dir(QUERIES_DEDUP).join(REPRESENTATIVES_FILE);
        let parsed_path = self.stage_dir(SERPS_PARSE).join(PARSED_FILE);
        let reps: Vec<Representative> = read_jsonl(&reps_path)?;
        let parsed: Vec<ParsedSerpRecord> = read_jsonl(&parsed_path)?;
        let detector: Box<dyn LanguageDetector> = match &opts.stopwords {
            Some(d) => Box::new(HeuristicDetector::from_dir(d).map_err(io_failed(d))?),
            None => Box::new(HeuristicDetector::bundled()),
        };
        let builder = CorpusBuilder {
            registry: &registry,
            detector: detector.as_ref(),
            archive_base: Some(self.archive.wayback_base()),
        };
        let (queries, mut results, stats) =
            builder.build(&reps, &parsed).map_err(|e| StageError::Failed(e.to_string()))?;
        if opts.nearest_snapshots {
            let client = self.client()?;
            enrich_nearest_snapshots(&mut results, &client, Some(self.archive.wayback_base()));
        }
        for sub in ["queries", "results"] {
            let _ = fs::remove_dir_all(dir.join(sub));
        }
        let manifest = emit_corpus(&queries, &results, &dir).map_err(|e| StageError::Failed(e.to_string()))?;
        let outputs = manifest
            .queries
            .iter()
            .chain(&manifest.results)
            .map(|s| self.rel(&dir.join(&s.path)))
            .chain([self.rel(&dir.join(CORPUS_MANIFEST))])
            .collect();
        self.complete(
            CORPUS_BUILD.name,
            &dir,
            hash,
            vec![self.rel(&reps_path), self.rel(&parsed_path)],
            outputs,
            counts([
                ("queries", stats.queries),
                ("queries_with_serp", stats.with_serp),
                ("unparsed_serps", stats.unparsed_serps),
                ("results", stats.results),
            ]),
        )
    }

    pub fn analyze(&self, analysis: &Analysis) -> Result<StageReport, StageError> {
        // The estimate only needs its rates and, optionally, the plan.
        let corpus = match analysis {
            Analysis::Estimate { .. } => None,
            _ => Some(self.require(CORPUS_BUILD)?),
        };
        let corpus_dir = self.stage_dir(CORPUS_BUILD);
        let name = format!("analyze {}", analysis.name());
        let dir = self.out.join("analysis").join(analysis.name());
        let (config, extra_upstream) = match analysis {
            Analysis::Lengths { top_n } => (json!({"top_n": top_n}), None),
            Analysis::Coverage { granularity } => (json!({"granularity": granularity}), None),
            Analysis::Domains { k, n } => (json!({"k": k, "n": n, "registry": self.registry_hash()?}), None),
            Analysis::Timeline { terms, granularity } => (json!({"terms": terms, "granularity": granularity}), None),
            Analysis::Overlap { external } => {
                let bytes =
                    fs::read(external).map_err(|e| StageError::Usage(format!("{}: {e}", external.display())))?;
                (json!({"external": sha256_hex(&bytes)}), None)
            }
            Analysis::Obscenity { wordlists } => {
                let lists = load_wordlists(wordlists)?;
                (json!({"wordlists": lists}), None)
            }
            Analysis::Estimate { availability, parse_rate, results_per_serp, planned } => {
                let plan = match planned {
                    Some(_) => None,
                    None => Some(self.require(SERPS_PLAN)?),
                };
                (
                    json!({"availability": availability, "parse_rate": parse_rate, "results_per_serp": results_per_serp, "planned": planned}),
                    plan,
                )
            }
        };
        let upstream: Vec<_> = corpus.iter().chain(&extra_upstream).collect();
        let hash = match self.begin(&name, &dir, &config, &upstream)? {
            Begin::UpToDate(m) => return Ok(skipped(m)),
            Begin::Run(h) => h,
        };
        let queries = || corpus_queries(&corpus_dir).map_err(jsonl_failed);
        let mut c = BTreeMap::new();
        let tsv = match analysis {
            Analysis::Lengths { top_n } => {
                let mut acc = QueryLengths::default();
                for q in queries()? {
                    let q = q.map_err(jsonl_failed)?;
                    acc.add((&q.provider, &q.query));
                }
                let hists = acc.histograms(*top_n);
                c.insert("groups".into(), hists.len() as u64);
                QueryLengths::tsv(&hists)
            }
            Analysis::Coverage { granularity } => {
                let mut acc = TimeCoverage::new(*granularity);
                let captures = self.stage_dir(CAPTURES_FILTER).join(CAPTURES_FILE);
                if captures.exists() {
                    for row in read_records::<CaptureRow>(&captures).map_err(jsonl_failed)? {
                        acc.add((DataType::Urls, &row.map_err(jsonl_failed)?.capture.timestamp));
                    }
                }
                for q in queries()? {
                    let q = q.map_err(jsonl_failed)?;
                    acc.add((DataType::Queries, &q.timestamp));
                    if q.result_count.is_some() {
                        acc.add((DataType::Serps, &q.timestamp));
                    }
                }
                for r in corpus_results(&corpus_dir).map_err(jsonl_failed)? {
                    acc.add((DataType::Results, &r.map_err(jsonl_failed)?.timestamp));
                }
                acc.tsv()
            }
            Analysis::Domains { k, n } => {
                let registry = self.registry()?;
                let own: HashMap<String, Vec<String>> = registry
                    .iter()
                    .map(|p| {
                        let mut d: Vec<String> = p.domains.iter().map(|d| registrable_domain(d)).collect();
                        d.sort();
                        d.dedup();
                        (p.name.clone(), d)
                    })
                    .collect();
                let mut acc = TopDomains::new(*k);
                for r in corpus_results(&corpus_dir).map_err(jsonl_failed)? {
                    let r = r.map_err(jsonl_failed)?;
                    let domains = own.get(&r.provider).map(Vec::as_slice).unwrap_or(&[]);
                    acc.add((r.rank, &r.url, domains));
                }
                let shares = acc.shares(*n);
                c.insert("results".into(), shares.total);
                shares.tsv()
            }
            Analysis::Timeline { terms, granularity } => {
                let mut acc = TermTimeline::new(terms, *granularity);
                for q in queries()? {
                    let q = q.map_err(jsonl_failed)?;
                    acc.add((&q.query, &q.timestamp));
                }
                acc.finish().tsv()
            }
            Analysis::Overlap { external } => {
                let list = read_lines(external)?;
                let mut acc = ExactOverlap::new(&list);
                for q in queries()? {
                    acc.add(&q.map_err(jsonl_failed)?.query);
                }
                c.insert("external".into(), list.len() as u64);
                c.insert("matched".into(), acc.matched() as u64);
                acc.tsv()
            }
            Analysis::Obscenity { wordlists } => {
                let mut acc = ObscenityShare::new(&load_wordlists(wordlists)?);
                for q in queries()? {
                    let q = q.map_err(jsonl_failed)?;
                    acc.add((&q.provider, &q.query, q.language.as_deref()));
                }
                acc.finish().tsv()
            }
            Analysis::Estimate { availability, parse_rate, results_per_serp, planned } => {
                let planned = planned.unwrap_or_else(|| {
                    extra_upstream.as_ref().and_then(|m| m.counts.get("planned").copied()).unwrap_or(0)
                });
                let (serps, results) = estimate_totals(planned, *availability, *parse_rate, *results_per_serp);
                c.insert("planned".into(), planned);
                c.insert("serps".into(), serps);
                c.insert("results".into(), results);
                crate::analysis::to_tsv(
                    &["planned", "availability", "parse_rate", "results_per_serp", "serps", "results"],
                    [vec![
                        planned.to_string(),
                        availability.to_string(),
                        parse_rate.to_string(),
                        results_per_serp.to_string(),
                        serps.to_string(),
                        results.to_string(),
                    ]],
                )
            }
        };
        let out = dir.join(RESULT_TSV);
        fs::write(&out, tsv).map_err(io_failed(&out))?;
        self.complete(&name, &dir, hash, vec![self.rel(&corpus_dir)], vec![self.rel(&out)], c)
    }

    /// Records (or verifies) approval snapshots for every case in `dir`.
    pub fn approval(&self, dir: &Path, verify: bool) -> Result<ApprovalOutcome, StageError> {
        let registry = self.registry()?;
        if !dir.is_dir() {
            return Err(StageError::Usage(format!("fixture directory {} does not exist", dir.display())));
        }
        let cases = load_cases(dir).map_err(|e| StageError::Failed(e.to_string()))?;
        let mut outcome = ApprovalOutcome::default();
        for case in cases {
            let provider = registry.get(&case.provider).ok_or_else(|| {
                StageError::Failed(format!("case {}: unknown provider {:?}", case.fixture.id, case.provider))
            })?;
            let diff = if verify {
                match approval_verify(&provider.serp_parsers, &case.fixture, &case.snapshot_path) {
                    Ok(Verdict::Pass) => None,
                    Ok(Verdict::Diff(d)) => Some(d.to_string()),
                    Err(e) => Some(e.to_string()),
                }
            } else {
                approval_record(&provider.serp_parsers, &case.fixture, &case.snapshot_path)
                    .map_err(|e| StageError::Failed(e.to_string()))?;
                None
            };
            outcome.cases.push((case.fixture.id.clone(), diff));
        }
        Ok(outcome)
    }
}

/// `<lang>.txt` files, one term per line.
pub fn load_wordlists(dir: &Path) -> Result<BTreeMap<String, Vec<String>>, StageError> {
    let mut lists = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| StageError::Usage(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(io_failed(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(lang) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        lists.insert(lang.to_string(), read_lines(&path)?);
    }
    Ok(lists)
}

/// Runs every stage from capture listing to corpus emission.
pub fn run_all(
    pipeline: &Pipeline,
    default_cap: u64,
    chunk_size: usize,
    download: &DownloadOptions,
    corpus: &CorpusOptions,
) -> Result<Vec<StageReport>, StageError> {
    Ok(vec![
        pipeline.captures_fetch(&FetchOptions::default())?,
        pipeline.captures_filter()?,
        pipeline.queries_extract()?,
        pipeline.queries_dedup(chunk_size)?,
        pipeline.serps_plan(default_cap)?,
        pipeline.serps_download(download)?,
        pipeline.serps_parse()?,
        pipeline.corpus_build(corpus)?,
    ])
}
