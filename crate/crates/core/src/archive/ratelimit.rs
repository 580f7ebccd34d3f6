//! Per-host token bucket with a burst capacity of one token.
//!
//! Consecutive grants for one host are at least `1 / rate` apart, so any
//! window of length `w` holds at most `floor(rate * w) + 1` requests.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::clock::Clock;

pub struct RateLimiter {
    interval: Option<Duration>,
    clock: Arc<dyn Clock>,
    next_slot: Mutex<HashMap<String, Duration>>,
}

impl std::fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateLimiter").field("interval", &self.interval).finish_non_exhaustive()
    }
}

impl RateLimiter {
    /// `per_host_rate` in requests per second; non-finite or non-positive
    /// rates disable limiting.
    pub fn new(per_host_rate: f64, clock: Arc<dyn Clock>) -> Self {
        let interval =
            (per_host_rate.is_finite() && per_host_rate > 0.0).then(|| Duration::from_secs_f64(1.0 / per_host_rate));
        Self { interval, clock, next_slot: Mutex::new(HashMap::new()) }
    }

    /// Blocks until a request to `host` may be issued.
    pub fn acquire(&self, host: &str) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait = {
            let mut slots = self.next_slot.lock().expect("rate limiter poisoned");
            let now = self.clock.now();
            let slot = slots.entry(host.to_string()).or_insert(now);
            let granted = (*slot).max(now);
            *slot = granted + interval;
            granted - now
        };
        if !wait.is_zero() {
            self.clock.sleep(wait);
        }
    }
}
