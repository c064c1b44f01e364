//! Daily count retrieval from a provider-agnostic bucket API.
//!
//! A source answers one page request with a JSON array of
//! `{"start":"YYYY-MM-DD","end":"YYYY-MM-DD","count":N}` buckets. The client
//! splits the requested range into pages, retries transport failures with
//! exponential backoff and assembles one value per day.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{add_days, days_between, DailySeries, DateRange};

pub const TOKEN_ENV: &str = "EPISIM_API_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub count: f64,
}

/// Failure of a single page request.
#[derive(Debug, Clone, PartialEq)]
pub enum FetchFailure {
    /// Worth retrying: connection errors, 5xx, 429.
    Transient(String),
    Auth(u16),
    Fatal(String),
}

pub trait CountSource {
    fn fetch_page(&self, query: &str, range: DateRange) -> std::result::Result<Vec<Bucket>, FetchFailure>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Replays buckets from a JSON document; never touches the network.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    buckets: Vec<Bucket>,
}

impl FixtureSource {
    pub fn new(buckets: Vec<Bucket>) -> Self {
        Self { buckets }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl CountSource for FixtureSource {
    fn fetch_page(&self, _query: &str, range: DateRange) -> std::result::Result<Vec<Bucket>, FetchFailure> {
        Ok(self
            .buckets
            .iter()
            .filter(|b| range.contains(b.start))
            .cloned()
            .collect())
    }
}

/// Live HTTP source. Sends `GET endpoint?query=..&start=..&end=..&granularity=day`
/// with a bearer token.
pub struct HttpSource {
    endpoint: String,
    token: String,
    agent: ureq::Agent,
}

impl HttpSource {
    pub fn new(endpoint: impl Into<String>, token: impl Into<String>) -> Result<Self> {
        let token = token.into();
        if token.trim().is_empty() {
            return Err(Error::InvalidArgument("auth token is empty".into()));
        }
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        Ok(Self {
            endpoint: endpoint.into(),
            token,
            agent: config.into(),
        })
    }

    /// Reads the token from `EPISIM_API_TOKEN`.
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self> {
        let token = std::env::var(TOKEN_ENV)
            .map_err(|_| Error::InvalidArgument(format!("{TOKEN_ENV} is not set")))?;
        Self::new(endpoint, token)
    }
}

impl CountSource for HttpSource {
    fn fetch_page(&self, query: &str, range: DateRange) -> std::result::Result<Vec<Bucket>, FetchFailure> {
        let start = range.start.to_string();
        let end = range.end.to_string();
        let resp = self
            .agent
            .get(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .query("query", query)
            .query("start", &start)
            .query("end", &end)
            .query("granularity", "day")
            .call();
        match resp {
            Ok(mut r) => {
                let body = r
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| FetchFailure::Transient(e.to_string()))?;
                serde_json::from_str(&body).map_err(|e| FetchFailure::Fatal(format!("bad bucket JSON: {e}")))
            }
            Err(ureq::Error::StatusCode(code)) if code == 401 || code == 403 => Err(FetchFailure::Auth(code)),
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                Err(FetchFailure::Transient(format!("status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => Err(FetchFailure::Fatal(format!("status {code}"))),
            Err(e) => Err(FetchFailure::Transient(e.to_string())),
        }
    }
}

pub struct CountClient<S> {
    source: S,
    retry: RetryPolicy,
    page_days: usize,
}

impl<S: CountSource> CountClient<S> {
    pub fn new(source: S) -> Self {
        Self {
            source,
            retry: RetryPolicy::default(),
            page_days: 31,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_page_days(mut self, days: usize) -> Self {
        self.page_days = days.max(1);
        self
    }

    fn page_with_retry(&self, query: &str, range: DateRange) -> Result<Vec<Bucket>> {
        let mut backoff = self.retry.initial_backoff;
        let mut attempt = 1;
        loop {
            match self.source.fetch_page(query, range) {
                Ok(b) => return Ok(b),
                Err(FetchFailure::Auth(code)) => return Err(Error::AuthRejected(code)),
                Err(FetchFailure::Fatal(msg)) => return Err(Error::Http(msg)),
                Err(FetchFailure::Transient(msg)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(Error::Http(format!("{msg} (after {attempt} attempts)")));
                    }
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
            }
        }
    }

    /// One count per day of `range`.
    pub fn fetch_counts(&self, query: &str, range: DateRange) -> Result<DailySeries> {
        let mut by_day = BTreeMap::new();
        let mut page_start = range.start;
        while page_start <= range.end {
            let page_end = add_days(page_start, self.page_days as i64 - 1).min(range.end);
            let page = DateRange::new(page_start, page_end)?;
            for b in self.page_with_retry(query, page)? {
                let span = days_between(b.end, b.start);
                if span != 0 && span != 1 {
                    return Err(Error::Http(format!(
                        "bucket {}..{} is not daily",
                        b.start, b.end
                    )));
                }
                if !(b.count >= 0.0) {
                    return Err(Error::NegativeValue {
                        date: b.start,
                        value: b.count,
                    });
                }
                if page.contains(b.start) && by_day.insert(b.start, b.count).is_some() {
                    return Err(Error::DuplicateDate(b.start));
                }
            }
            page_start = add_days(page_end, 1);
        }
        let values = range
            .iter()
            .map(|day| by_day.get(&day).copied().ok_or(Error::BucketGap(day)))
            .collect::<Result<Vec<_>>>()?;
        DailySeries::new(range.start, values, query)
    }
}

/// Convenience wrapper over [`CountClient`].
pub fn fetch_counts<S: CountSource>(source: S, query: &str, range: DateRange) -> Result<DailySeries> {
    CountClient::new(source).fetch_counts(query, range)
}
