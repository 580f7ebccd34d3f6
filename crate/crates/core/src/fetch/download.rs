//! Executing a download plan into WARC files.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::plan::PlanEntry;
use super::warc::{response_record_id, WarcError, WarcLocation, WarcWriter};
use crate::archive::{ArchiveClient, FetchOutcome};

/// Outcome of one plan entry, as written to the download log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownloadRecord {
    #[serde(flatten)]
    pub entry: PlanEntry,
    #[serde(flatten)]
    pub status: DownloadStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DownloadStatus {
    Stored {
        location: WarcLocation,
        /// Found in the WARC directory from an earlier run.
        #[serde(default)]
        resumed: bool,
    },
    Unavailable {
        attempts: u32,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DownloadSummary {
    pub stored: u64,
    pub resumed: u64,
    pub unavailable: u64,
}

#[derive(Debug, thiserror::Error)]
#[error("storage failed after {completed} entries (last durable record: {last_durable:?}): {source}")]
pub struct DownloadError {
    pub completed: usize,
    pub last_durable: Option<WarcLocation>,
    #[source]
    pub source: WarcError,
}

enum Fetched {
    Body(Vec<u8>),
    Missing { attempts: u32, reason: String },
}

fn fetch_one(client: &ArchiveClient, entry: &PlanEntry) -> Fetched {
    match client.fetch_snapshot(&entry.capture()) {
        Ok(FetchOutcome::Fetched(snapshot)) => Fetched::Body(snapshot.body),
        Ok(FetchOutcome::Unavailable { attempts, last_error }) => Fetched::Missing { attempts, reason: last_error },
        Err(e) => Fetched::Missing { attempts: 1, reason: e.to_string() },
    }
}

/// Fetches every entry not already present in `existing` (response
/// locations by record id) and appends it to `writer`.
///
/// Fetches run on up to `workers` threads in batches; records are written
/// by the calling thread in plan order, so output does not depend on
/// scheduling. `on_record` sees each outcome in plan order.
pub fn download_to_warc(
    plan: &[PlanEntry],
    client: &ArchiveClient,
    writer: &mut WarcWriter,
    existing: &HashMap<String, WarcLocation>,
    workers: usize,
    mut on_record: impl FnMut(&DownloadRecord),
) -> Result<DownloadSummary, DownloadError> {
    let workers = workers.max(1);
    let batch = workers * 4;
    let mut summary = DownloadSummary::default();
    let mut last_durable = None;

    for (batch_idx, chunk) in plan.chunks(batch).enumerate() {
        let todo: Vec<usize> = (0..chunk.len())
            .filter(|&i| !existing.contains_key(&response_record_id(&chunk[i].url, &chunk[i].timestamp)))
            .collect();
        let slots: Vec<Mutex<Option<Fetched>>> = (0..chunk.len()).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers.min(todo.len()) {
                scope.spawn(|| loop {
                    let n = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = todo.get(n) else { break };
                    let result = fetch_one(client, &chunk[i]);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });

        for (i, entry) in chunk.iter().enumerate() {
            let id = response_record_id(&entry.url, &entry.timestamp);
            let status = if let Some(location) = existing.get(&id) {
                summary.resumed += 1;
                DownloadStatus::Stored { location: location.clone(), resumed: true }
            } else {
                match slots[i].lock().expect("slot lock").take().expect("fetched") {
                    Fetched::Body(body) => {
                        let location =
                            writer.write_response(&entry.url, &entry.timestamp, &body).map_err(|source| {
                                DownloadError {
                                    completed: batch_idx * batch + i,
                                    last_durable: last_durable.clone(),
                                    source,
                                }
                            })?;
                        summary.stored += 1;
                        last_durable = Some(location.clone());
                        DownloadStatus::Stored { location, resumed: false }
                    }
                    Fetched::Missing { attempts, reason } => {
                        summary.unavailable += 1;
                        DownloadStatus::Unavailable { attempts, reason }
                    }
                }
            };
            on_record(&DownloadRecord { entry: entry.clone(), status });
        }
    }
    writer.sync().map_err(|source| DownloadError { completed: plan.len(), last_durable, source })?;
    Ok(summary)
}
