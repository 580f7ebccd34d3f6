//! Building a query log out of web-archive captures of search engine
//! result pages (SERPs).
//!
//! The crate follows the mining pipeline stage by stage:
//!
//! 1. [`providers`]: the catalog of search providers, popularity rank
//!    fusion and a static search-bar heuristic.
//! 2. [`archive`]: capture listing through a CDX index and snapshot
//!    retrieval, with rate limiting, retries and an offline replay backend.
//! 3. [`extract`]: URL splitting and query/page/offset parser chains.
//! 4. [`dedup`]: grouping by parsed query and representative selection.
//! 5. [`fetch`]: download planning and WARC persistence of archived SERPs.
//! 6. [`serp`]: selector-driven SERP parsing and approval snapshots.
//! 7. [`corpus`]: record assembly, identifiers and sharded JSONL output.
//! 8. [`analysis`]: measurements over an emitted corpus.
//!
//! [`pipeline`] wires the stages together behind file-based handoffs; the
//! `aql` binary exposes it on the command line.

pub mod analysis;
pub mod archive;
pub mod corpus;
pub mod dedup;
pub mod domain;
pub mod extract;
pub mod fetch;
pub mod jsonl;
pub mod pipeline;
pub mod providers;
pub mod serp;
pub mod timestamp;

pub use archive::{ArchiveClient, Capture, FetchPolicy};
pub use extract::{ExtractionResult, QueryParserSpec, UrlComponents};
pub use providers::{ProviderConfig, ProviderRegistry};
pub use serp::{ParsedSerp, SearchResult, SerpParserSpec};
