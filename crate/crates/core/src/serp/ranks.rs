//! Merging paginated SERPs of one query into a single ranking.

use serde::{Deserialize, Serialize};

use super::{ParsedSerp, SearchResult};

/// Where a SERP sits in the full ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PagePosition {
    /// 0-based page number.
    Page(u64),
    /// Number of results preceding the first one on this SERP.
    Offset(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct SerpPage<'a> {
    pub serp: &'a ParsedSerp,
    pub position: PagePosition,
    pub results_per_page: u32,
}

impl SerpPage<'_> {
    fn start(&self) -> u64 {
        match self.position {
            PagePosition::Page(p) => p * u64::from(self.results_per_page),
            PagePosition::Offset(o) => o,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankConflict {
    pub global_rank: u64,
    pub kept: SearchResult,
    pub discarded: SearchResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MergedRanking {
    /// `(global rank, result)` sorted by global rank; gaps mark missing pages.
    pub results: Vec<(u64, SearchResult)>,
    pub conflicts: Vec<RankConflict>,
}

/// Global rank of result `r` is `start + r`, where `start` is
/// `page * results_per_page` or the explicit offset.
///
/// When two pages claim the same global rank the page with the smaller
/// start (then the earlier input) wins and the clash is reported. Without
/// clashes the output does not depend on input order.
pub fn infer_continued_ranks(pages: &[SerpPage<'_>]) -> MergedRanking {
    let mut ordered: Vec<(usize, &SerpPage<'_>)> = pages.iter().enumerate().collect();
    ordered.sort_by_key(|(idx, page)| (page.start(), *idx));

    let mut placed: Vec<(u64, SearchResult)> = Vec::new();
    let mut conflicts = Vec::new();
    for (_, page) in ordered {
        let start = page.start();
        for result in &page.serp.results {
            let global_rank = start + u64::from(result.rank);
            let mut merged = result.clone();
            merged.rank = global_rank.min(u64::from(u32::MAX)) as u32;
            match placed.binary_search_by_key(&global_rank, |(r, _)| *r) {
                Ok(existing) => {
                    conflicts.push(RankConflict { global_rank, kept: placed[existing].1.clone(), discarded: merged })
                }
                Err(slot) => placed.insert(slot, (global_rank, merged)),
            }
        }
    }
    MergedRanking { results: placed, conflicts }
}
