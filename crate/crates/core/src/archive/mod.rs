//! Capture listing and snapshot retrieval against a web archive.
//!
//! [`ArchiveClient`] layers retries, exponential backoff and per-host rate
//! limiting over an [`ArchiveBackend`]: either the live CDX/Wayback HTTP
//! interface ([`cdx::LiveBackend`]) or a fixture directory
//! ([`replay::ReplayBackend`]).

pub mod cdx;
pub mod clock;
pub mod ratelimit;
pub mod replay;

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::timestamp::Timestamp14;

pub use clock::{Clock, ManualClock, SystemClock};
pub use ratelimit::RateLimiter;

/// One archived observation of a URL.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Capture {
    pub url: String,
    pub timestamp: Timestamp14,
    pub status: u16,
    pub mime: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaptureError {
    #[error("capture URL is empty")]
    EmptyUrl,
    #[error("capture URL {0:?} has no host")]
    NoHost(String),
    #[error(transparent)]
    Timestamp(#[from] crate::timestamp::TimestampError),
}

impl Capture {
    pub fn new(
        url: impl Into<String>,
        timestamp: &str,
        status: u16,
        mime: impl Into<String>,
        digest: impl Into<String>,
    ) -> Result<Self, CaptureError> {
        let url = url.into();
        if url.is_empty() {
            return Err(CaptureError::EmptyUrl);
        }
        match crate::extract::split_url(&url) {
            Ok(c) if !c.host().is_empty() => {}
            _ => return Err(CaptureError::NoHost(url)),
        }
        Ok(Self { url, timestamp: Timestamp14::parse(timestamp)?, status, mime: mime.into(), digest: digest.into() })
    }

    pub fn is_successful_html(&self) -> bool {
        self.status == 200 && (self.mime == "text/html" || self.mime.starts_with("text/html;"))
    }
}

/// Keeps captures with status 200 and an HTML MIME type, in order.
pub fn filter_captures<I>(captures: I) -> impl Iterator<Item = Capture>
where
    I: IntoIterator<Item = Capture>,
{
    captures.into_iter().filter(Capture::is_successful_html)
}

/// Retry, backoff and rate-limit settings for archive requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub delay_factor: f64,
    pub max_delay: Duration,
    /// Requests per second per host.
    pub per_host_rate: f64,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        Self {
            max_retries: 10,
            base_delay: Duration::from_secs(1),
            delay_factor: 2.0,
            max_delay: Duration::from_secs(60),
            per_host_rate: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("base_delay {base:?} exceeds max_delay {max:?}")]
    DelayOrder { base: Duration, max: Duration },
    #[error("delay_factor must be >= 1, got {0}")]
    Factor(f64),
    #[error("per_host_rate must be positive, got {0}")]
    Rate(f64),
}

impl FetchPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.base_delay > self.max_delay {
            return Err(PolicyError::DelayOrder { base: self.base_delay, max: self.max_delay });
        }
        if !(self.delay_factor >= 1.0) {
            return Err(PolicyError::Factor(self.delay_factor));
        }
        if !(self.per_host_rate > 0.0) {
            return Err(PolicyError::Rate(self.per_host_rate));
        }
        Ok(())
    }

    /// Delay after the failed attempt number `attempt` (0-based):
    /// `base_delay * delay_factor^attempt`, capped at `max_delay`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let secs = self.base_delay.as_secs_f64() * self.delay_factor.powi(attempt as i32);
        if !secs.is_finite() || secs >= self.max_delay.as_secs_f64() {
            self.max_delay
        } else {
            Duration::from_secs_f64(secs)
        }
    }
}

/// Failure reported by a backend for a single request.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Timeouts, connection resets, HTTP 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("permanent{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Permanent { status: Option<u16>, message: String },
}

impl BackendError {
    /// Classifies an HTTP error status.
    pub fn from_status(status: u16, context: &str) -> Self {
        if status == 429 || (500..600).contains(&status) {
            BackendError::Transient(format!("HTTP {status} for {context}"))
        } else {
            BackendError::Permanent { status: Some(status), message: context.to_string() }
        }
    }
}

/// A listing row: a parsed capture or the raw text of a malformed line.
pub type CdxRow = Result<Capture, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotBody {
    pub body: Vec<u8>,
    pub final_url: String,
}

/// Archive access primitives; each call is a single request.
pub trait ArchiveBackend: Send + Sync {
    /// Host used as rate-limiting key.
    fn host(&self) -> &str;
    fn page_count(&self, prefix: &str) -> Result<usize, BackendError>;
    fn page(&self, prefix: &str, page: usize) -> Result<Vec<CdxRow>, BackendError>;
    fn snapshot(&self, timestamp: &Timestamp14, url: &str) -> Result<SnapshotBody, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArchiveError {
    #[error("{what} failed after {attempts} attempts: {last_error}")]
    RetriesExhausted { what: String, attempts: u32, last_error: String },
    #[error("malformed listing line: {line:?}")]
    Malformed { line: String },
    #[error("snapshot {timestamp}/{url}: {source}")]
    Permanent {
        timestamp: String,
        url: String,
        #[source]
        source: BackendError,
    },
    #[error("listing {prefix}: {source}")]
    Listing {
        prefix: String,
        #[source]
        source: BackendError,
    },
    #[error("empty URL prefix")]
    EmptyPrefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchMeta {
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedSnapshot {
    pub body: Vec<u8>,
    pub final_url: String,
    pub meta: FetchMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Fetched(FetchedSnapshot),
    /// Transient failures on every attempt.
    Unavailable {
        attempts: u32,
        last_error: String,
    },
}

impl FetchOutcome {
    pub fn attempts(&self) -> u32 {
        match self {
            FetchOutcome::Fetched(f) => f.meta.attempts,
            FetchOutcome::Unavailable { attempts, .. } => *attempts,
        }
    }
}

enum Retried<T> {
    Done(T, u32),
    Exhausted(u32, String),
    Permanent(BackendError),
}

/// Rate-limited, retrying front end over a backend. Sharing one client
/// between workers shares its rate limiter.
#[derive(Clone)]
pub struct ArchiveClient {
    backend: Arc<dyn ArchiveBackend>,
    policy: FetchPolicy,
    limiter: Arc<RateLimiter>,
    clock: Arc<dyn Clock>,
    skip_malformed: bool,
}

impl std::fmt::Debug for ArchiveClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ArchiveClient")
            .field("host", &self.backend.host())
            .field("policy", &self.policy)
            .field("skip_malformed", &self.skip_malformed)
            .finish()
    }
}

impl ArchiveClient {
    pub fn new(backend: Arc<dyn ArchiveBackend>, policy: FetchPolicy, clock: Arc<dyn Clock>) -> Self {
        let limiter = Arc::new(RateLimiter::new(policy.per_host_rate, clock.clone()));
        Self { backend, policy, limiter, clock, skip_malformed: false }
    }

    /// Skip malformed listing lines instead of yielding an error for them.
    pub fn skip_malformed(mut self, skip: bool) -> Self {
        self.skip_malformed = skip;
        self
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    pub fn backend(&self) -> &Arc<dyn ArchiveBackend> {
        &self.backend
    }

    fn with_retries<T>(&self, mut request: impl FnMut() -> Result<T, BackendError>) -> Retried<T> {
        let host = self.backend.host().to_string();
        let mut attempt = 0;
        loop {
            self.limiter.acquire(&host);
            match request() {
                Ok(value) => return Retried::Done(value, attempt + 1),
                Err(BackendError::Transient(message)) => {
                    if attempt >= self.policy.max_retries {
                        return Retried::Exhausted(attempt + 1, message);
                    }
                    self.clock.sleep(self.policy.backoff(attempt));
                    attempt += 1;
                }
                Err(permanent) => return Retried::Permanent(permanent),
            }
        }
    }

    /// Lists all captures under `prefix`, page by page.
    pub fn list_captures(&self, prefix: &str) -> Result<CaptureStream<'_>, ArchiveError> {
        self.list_captures_from(prefix, 0)
    }

    /// Like [`Self::list_captures`], starting at page index `first_page`.
    pub fn list_captures_from(&self, prefix: &str, first_page: usize) -> Result<CaptureStream<'_>, ArchiveError> {
        if prefix.is_empty() {
            return Err(ArchiveError::EmptyPrefix);
        }
        Ok(CaptureStream {
            client: self,
            prefix: prefix.to_string(),
            total_pages: None,
            next_page: first_page,
            buffer: VecDeque::new(),
            failed: false,
        })
    }

    /// Fetches the archived body addressed by the capture's timestamp and URL.
    ///
    /// Transient failures are retried up to `max_retries` times; when every
    /// attempt fails the outcome is [`FetchOutcome::Unavailable`]. Permanent
    /// failures are returned as errors without retrying.
    pub fn fetch_snapshot(&self, capture: &Capture) -> Result<FetchOutcome, ArchiveError> {
        match self.with_retries(|| self.backend.snapshot(&capture.timestamp, &capture.url)) {
            Retried::Done(snapshot, attempts) => Ok(FetchOutcome::Fetched(FetchedSnapshot {
                body: snapshot.body,
                final_url: snapshot.final_url,
                meta: FetchMeta { attempts },
            })),
            Retried::Exhausted(attempts, last_error) => Ok(FetchOutcome::Unavailable { attempts, last_error }),
            Retried::Permanent(source) => Err(ArchiveError::Permanent {
                timestamp: capture.timestamp.to_string(),
                url: capture.url.clone(),
                source,
            }),
        }
    }
}

/// Streaming capture listing. Pages are fetched lazily; after an error the
/// stream ends and [`CaptureStream::next_page`] tells where to resume.
pub struct CaptureStream<'a> {
    client: &'a ArchiveClient,
    prefix: String,
    total_pages: Option<usize>,
    next_page: usize,
    buffer: VecDeque<CdxRow>,
    failed: bool,
}

impl CaptureStream<'_> {
    /// Index of the next page to request. Every earlier page has been
    /// fully buffered.
    pub fn next_page(&self) -> usize {
        self.next_page
    }

    pub fn total_pages(&self) -> Option<usize> {
        self.total_pages
    }

    fn exhausted(&self, what: String, attempts: u32, last_error: String) -> ArchiveError {
        ArchiveError::RetriesExhausted { what, attempts, last_error }
    }

    fn fill(&mut self) -> Option<Result<(), ArchiveError>> {
        let client = self.client;
        if self.total_pages.is_none() {
            match client.with_retries(|| client.backend.page_count(&self.prefix)) {
                Retried::Done(n, _) => self.total_pages = Some(n),
                Retried::Exhausted(attempts, e) => {
                    return Some(Err(self.exhausted(format!("page count for {}", self.prefix), attempts, e)))
                }
                Retried::Permanent(source) => {
                    return Some(Err(ArchiveError::Listing { prefix: self.prefix.clone(), source }))
                }
            }
        }
        if self.next_page >= self.total_pages.unwrap_or(0) {
            return None;
        }
        let page = self.next_page;
        match client.with_retries(|| client.backend.page(&self.prefix, page)) {
            Retried::Done(rows, _) => {
                self.buffer.extend(rows);
                self.next_page += 1;
                Some(Ok(()))
            }
            Retried::Exhausted(attempts, e) => {
                Some(Err(self.exhausted(format!("page {page} of {}", self.prefix), attempts, e)))
            }
            Retried::Permanent(source) => Some(Err(ArchiveError::Listing { prefix: self.prefix.clone(), source })),
        }
    }
}

impl Iterator for CaptureStream<'_> {
    type Item = Result<Capture, ArchiveError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.failed {
                return None;
            }
            match self.buffer.pop_front() {
                Some(Ok(capture)) => return Some(Ok(capture)),
                Some(Err(_)) if self.client.skip_malformed => continue,
                Some(Err(line)) => return Some(Err(ArchiveError::Malformed { line })),
                None => match self.fill()? {
                    Ok(()) => continue,
                    Err(e) => {
                        self.failed = true;
                        return Some(Err(e));
                    }
                },
            }
        }
    }
}
