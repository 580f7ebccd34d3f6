//! Download planning and WARC persistence of archived SERPs.

pub mod download;
pub mod plan;
pub mod warc;

pub use download::{download_to_warc, DownloadError, DownloadRecord, DownloadStatus, DownloadSummary};
pub use plan::{plan_downloads, DownloadPlan, PlanEntry, DEFAULT_DOWNLOAD_CAP};
pub use warc::{existing_record_ids, index_responses, read_warc, WarcError, WarcLocation, WarcRecord, WarcWriter};
