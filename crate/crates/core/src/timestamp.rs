//! Fourteen-digit archive timestamps (`YYYYMMDDhhmmss`, UTC).

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid capture timestamp {raw:?}: {reason}")]
pub struct TimestampError {
    pub raw: String,
    pub reason: &'static str,
}

/// A validated capture timestamp. Ordering is chronological because the
/// representation is fixed-width.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp14(String);

impl Timestamp14 {
    pub fn parse(raw: &str) -> Result<Self, TimestampError> {
        if raw.len() != 14 || !raw.bytes().all(|b| b.is_ascii_digit()) {
            return Err(TimestampError { raw: raw.to_string(), reason: "expected exactly 14 ASCII digits" });
        }
        NaiveDateTime::parse_from_str(raw, "%Y%m%d%H%M%S")
            .map_err(|_| TimestampError { raw: raw.to_string(), reason: "not a valid calendar instant" })?;
        Ok(Self(raw.to_string()))
    }

    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Self(dt.format("%Y%m%d%H%M%S").to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_datetime(&self) -> DateTime<Utc> {
        let naive = NaiveDateTime::parse_from_str(&self.0, "%Y%m%d%H%M%S").expect("validated on construction");
        Utc.from_utc_datetime(&naive)
    }

    /// `2020-03-01T12:00:00Z`
    pub fn to_iso8601(&self) -> String {
        self.to_datetime().format("%Y-%m-%dT%H:%M:%SZ").to_string()
    }

    pub fn year(&self) -> i32 {
        self.to_datetime().year()
    }

    pub fn month(&self) -> u32 {
        self.to_datetime().month()
    }

    /// Seconds since the Unix epoch.
    pub fn epoch_seconds(&self) -> i64 {
        self.to_datetime().timestamp()
    }
}

impl fmt::Display for Timestamp14 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Timestamp14 {
    type Err = TimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl AsRef<str> for Timestamp14 {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for Timestamp14 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Timestamp14 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Self::parse(&raw).map_err(serde::de::Error::custom)
    }
}
