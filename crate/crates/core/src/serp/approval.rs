//! Approval snapshots for SERP parser configurations.
//!
//! A snapshot is UTF-8 text: a header line naming the matched spec and the
//! SERP, a `query:` line, then one `rank<TAB>url<TAB>title<TAB>snippet`
//! line per result. Backslash, tab, CR, LF and other control characters in
//! fields are escaped. A parse miss is recorded as a header with `spec=-`
//! followed by a single `miss` line.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{parse_serp, ParsedSerp, SerpParserSpec};

const HEADER_TAG: &str = "#serp-approval";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerpFixture {
    pub id: String,
    pub url: String,
    pub html: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum ApprovalError {
    #[error("no approved snapshot at {0}")]
    MissingSnapshot(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed snapshot: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
}

/// First divergence between an approved snapshot and the current parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffReport {
    pub field: String,
    pub expected: String,
    pub actual: String,
    pub context: String,
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected {:?}, got {:?}", self.field, self.expected, self.actual)?;
        if !self.context.is_empty() {
            write!(f, " ({})", self.context)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Diff(DiffReport),
}

pub fn escape_field(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => out.push_str(&format!("\\u{{{:x}}}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Canonical snapshot text of a parse outcome.
pub fn render_snapshot(serp_id: &str, parsed: Option<&ParsedSerp>) -> String {
    let mut out = String::new();
    match parsed {
        None => {
            out.push_str(&format!("{HEADER_TAG} spec=- serp={}\nmiss\n", escape_field(serp_id)));
        }
        Some(p) => {
            out.push_str(&format!("{HEADER_TAG} spec={} serp={}\n", p.matched_spec, escape_field(serp_id)));
            match &p.interpreted_query {
                Some(q) => out.push_str(&format!("query: {}\n", escape_field(q))),
                None => out.push_str("query:\n"),
            }
            for r in &p.results {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    r.rank,
                    escape_field(&r.url),
                    escape_field(&r.title),
                    escape_field(&r.snippet)
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Snapshot {
    spec: String,
    query: Option<String>,
    results: Vec<[String; 4]>,
}

fn read_snapshot(text: &str, path: &Path) -> Result<Snapshot, ApprovalError> {
    let malformed = |line: usize, message: &str| ApprovalError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
    let spec = header
        .strip_prefix(HEADER_TAG)
        .and_then(|rest| rest.trim_start().strip_prefix("spec="))
        .and_then(|rest| rest.split(' ').next())
        .ok_or_else(|| malformed(1, "missing header"))?
        .to_string();
    if spec == "-" {
        return Ok(Snapshot { spec, query: None, results: Vec::new() });
    }
    let query_line = lines.next().ok_or_else(|| malformed(2, "missing query line"))?;
    let query = match query_line.strip_prefix("query:") {
        Some("") => None,
        Some(rest) => Some(rest.strip_prefix(' ').unwrap_or(rest).to_string()),
        None => return Err(malformed(2, "expected `query:`")),
    };
    let mut results = Vec::new();
    for (idx, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split('\t').collect();
        let [rank, url, title, snippet] = parts[..] else {
            return Err(malformed(idx + 3, "expected four tab-separated fields"));
        };
        results.push([rank.to_string(), url.to_string(), title.to_string(), snippet.to_string()]);
    }
    Ok(Snapshot { spec, query, results })
}

fn compare(expected: &Snapshot, actual: &Snapshot) -> Verdict {
    let diff = |field: String, e: &str, a: &str, context: String| {
        Verdict::Diff(DiffReport { field, expected: e.to_string(), actual: a.to_string(), context })
    };
    if expected.spec != actual.spec {
        return diff("matched spec".into(), &expected.spec, &actual.spec, String::new());
    }
    if expected.query != actual.query {
        return diff(
            "query".into(),
            expected.query.as_deref().unwrap_or("<none>"),
            actual.query.as_deref().unwrap_or("<none>"),
            String::new(),
        );
    }
    const NAMES: [&str; 4] = ["rank", "url", "title", "snippet"];
    let longest = expected.results.len().max(actual.results.len());
    for i in 0..longest {
        let rank = i + 1;
        match (expected.results.get(i), actual.results.get(i)) {
            (Some(e), Some(a)) => {
                if let Some(f) = (0..4).find(|&f| e[f] != a[f]) {
                    return diff(
                        format!("result {rank} {}", NAMES[f]),
                        &e[f],
                        &a[f],
                        format!("expected item {}", e[1]),
                    );
                }
            }
            (Some(e), None) => {
                return diff(
                    format!("result list diverges at rank {rank}"),
                    &e[1],
                    "<missing>",
                    format!("{} results expected, {} parsed", expected.results.len(), actual.results.len()),
                )
            }
            (None, Some(a)) => {
                return diff(
                    format!("result list diverges at rank {rank}"),
                    "<missing>",
                    &a[1],
                    format!("{} results expected, {} parsed", expected.results.len(), actual.results.len()),
                )
            }
            (None, None) => unreachable!(),
        }
    }
    Verdict::Pass
}

/// Parses the fixture and writes its snapshot to `snapshot_path`.
pub fn approval_record(
    specs: &[SerpParserSpec],
    fixture: &SerpFixture,
    snapshot_path: &Path,
) -> Result<String, ApprovalError> {
    let parsed = parse_serp(&fixture.html, &fixture.url, specs);
    let text = render_snapshot(&fixture.id, parsed.as_ref());
    if let Some(parent) = snapshot_path.parent() {
        fs::create_dir_all(parent).map_err(|source| ApprovalError::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(snapshot_path, &text)
        .map_err(|source| ApprovalError::Io { path: snapshot_path.to_path_buf(), source })?;
    Ok(text)
}

/// Re-parses the fixture and compares it with the approved snapshot.
pub fn approval_verify(
    specs: &[SerpParserSpec],
    fixture: &SerpFixture,
    snapshot_path: &Path,
) -> Result<Verdict, ApprovalError> {
    let approved = match fs::read_to_string(snapshot_path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(ApprovalError::MissingSnapshot(snapshot_path.to_path_buf()))
        }
        Err(source) => return Err(ApprovalError::Io { path: snapshot_path.to_path_buf(), source }),
    };
    let expected = read_snapshot(&approved, snapshot_path)?;
    let parsed = parse_serp(&fixture.html, &fixture.url, specs);
    let current = render_snapshot(&fixture.id, parsed.as_ref());
    let actual = read_snapshot(&current, Path::new("<current>"))?;
    Ok(compare(&expected, &actual))
}

/// An approval case on disk: `<id>.html` next to `<id>.json` holding
/// `{"provider": ..., "url": ...}`; the snapshot is `<id>.approved.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApprovalCase {
    pub provider: String,
    pub fixture: SerpFixture,
    pub snapshot_path: PathBuf,
}

#[derive(Deserialize)]
struct CaseMeta {
    provider: String,
    url: String,
}

pub fn load_cases(dir: &Path) -> Result<Vec<ApprovalCase>, ApprovalError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ApprovalError::Io { path, source }
    };
    let mut cases = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "html"))
        .collect();
    entries.sort();
    for html_path in entries {
        let id = html_path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let meta_path = html_path.with_extension("json");
        let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: CaseMeta = serde_json::from_str(&meta_text)
            .map_err(|e| ApprovalError::Fixture { path: meta_path.clone(), message: e.to_string() })?;
        let html = fs::read(&html_path).map_err(io_err(&html_path))?;
        cases.push(ApprovalCase {
            provider: meta.provider,
            snapshot_path: dir.join(format!("{id}.approved.txt")),
            fixture: SerpFixture { id, url: meta.url, html },
        });
    }
    Ok(cases)
}
