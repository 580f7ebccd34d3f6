//! Reciprocal rank fusion over popularity ranking snapshots.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

pub const DEFAULT_RRF_K: f64 = 60.0;
pub const DEFAULT_CUTOFF: usize = 1000;

/// One ranking snapshot; ranks are 1-based and strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSnapshot {
    pub snapshot_id: String,
    pub ranking: Vec<(String, u32)>,
}

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("no ranking snapshots to fuse")]
    NoSnapshots,
    #[error("cutoff must be at least 1")]
    Cutoff,
    #[error("k must be positive and finite, got {0}")]
    K(f64),
    #[error("{snapshot}:{line}: {message}")]
    Snapshot { snapshot: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RankSnapshot {
    pub fn new(snapshot_id: impl Into<String>, ranking: Vec<(String, u32)>) -> Result<Self, FusionError> {
        let snapshot_id = snapshot_id.into();
        let mut seen = HashSet::new();
        let mut previous = 0u32;
        for (idx, (domain, rank)) in ranking.iter().enumerate() {
            let fail =
                |message: String| FusionError::Snapshot { snapshot: snapshot_id.clone(), line: idx + 1, message };
            if idx == 0 && *rank != 1 {
                return Err(fail(format!("ranking must start at 1, starts at {rank}")));
            }
            if *rank <= previous {
                return Err(fail(format!("rank {rank} does not increase after {previous}")));
            }
            if !seen.insert(domain.as_str()) {
                return Err(fail(format!("duplicate domain {domain:?}")));
            }
            previous = *rank;
        }
        Ok(Self { snapshot_id, ranking })
    }
}

/// Parses `rank,domain` lines, as in the Alexa top-1M CSV files.
pub fn parse_snapshot(snapshot_id: &str, text: &str) -> Result<RankSnapshot, FusionError> {
    let mut ranking = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fail =
            |message: String| FusionError::Snapshot { snapshot: snapshot_id.to_string(), line: idx + 1, message };
        let (rank, domain) =
            line.split_once(',').ok_or_else(|| fail(format!("expected `rank,domain`, got {line:?}")))?;
        let rank: u32 = rank.trim().parse().map_err(|_| fail(format!("bad rank {rank:?}")))?;
        let domain = domain.trim().to_ascii_lowercase();
        if domain.is_empty() {
            return Err(fail("empty domain".into()));
        }
        ranking.push((domain, rank));
    }
    RankSnapshot::new(snapshot_id, ranking)
}

/// Loads a snapshot file; the snapshot id is the file stem.
pub fn load_snapshot(path: &Path) -> Result<RankSnapshot, FusionError> {
    let text =
        fs::read_to_string(path).map_err(|source| FusionError::Io { path: path.display().to_string(), source })?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_snapshot(&id, &text)
}

/// Fuses snapshots truncated to their first `cutoff` entries:
/// `score(d) = Σ 1 / (k + rank_s(d))` over snapshots containing `d`.
///
/// Output is sorted by descending score, ties by domain. Each domain's
/// contributions are summed in ascending order so the floating-point result
/// does not depend on snapshot order.
pub fn fuse_rankings(snapshots: &[RankSnapshot], cutoff: usize, k: f64) -> Result<Vec<(String, f64)>, FusionError> {
    if snapshots.is_empty() {
        return Err(FusionError::NoSnapshots);
    }
    if cutoff == 0 {
        return Err(FusionError::Cutoff);
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(FusionError::K(k));
    }
    let mut contributions: HashMap<&str, Vec<f64>> = HashMap::new();
    for snapshot in snapshots {
        for (domain, rank) in snapshot.ranking.iter().take(cutoff) {
            contributions.entry(domain.as_str()).or_default().push(1.0 / (k + f64::from(*rank)));
        }
    }
    let mut fused: Vec<(String, f64)> = contributions
        .into_iter()
        .map(|(domain, mut parts)| {
            parts.sort_by(f64::total_cmp);
            (domain.to_string(), parts.iter().sum())
        })
        .collect();
    fused.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(fused)
}
