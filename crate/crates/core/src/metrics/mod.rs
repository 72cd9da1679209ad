//! Measurement harness: percentiles, jitter, duplicate detection, overlap
//! replay and run reports. All percentiles are nearest-rank.

mod replay;
mod report;

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventKind, KeyMode};

pub use replay::{replay_overlap, OverlapReplay, ReplayConfig};
pub use report::{
    LoudnessSummary, RunConfigEcho, RunReport, SegmentStats, WallClockInfo, PERCENTILE_METHOD, REPORT_VERSION,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("percentile of an empty sample set")]
    Empty,
    #[error("percentile must be in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn rank(p: f64, n: usize) -> Result<usize, MetricsError> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricsError::BadPercentile(p));
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    // 1-based rank ceil(p/100 * n), clamped against float round-up
    Ok(((p / 100.0 * n as f64).ceil() as usize).clamp(1, n))
}

/// Nearest-rank percentile: the `ceil(p/100 * n)`-th smallest sample.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, MetricsError> {
    let r = rank(p, samples.len())?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[r - 1])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

/// Default bin cap of [`LatencyHistogram`].
pub const HISTOGRAM_MAX_BINS: usize = 4096;

/// Latency collector with a fixed memory cap. Samples are rounded to whole
/// microseconds and then bucketed at the current resolution, which starts
/// at 1 us and doubles (merging neighbours) whenever the bin count would
/// exceed the cap. Percentiles are exact nearest-rank over the bucketed
/// samples, reported at the bucket's lower edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyHistogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
    resolution_us: u64,
    max_bins: usize,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self::with_max_bins(HISTOGRAM_MAX_BINS)
    }
}

impl LatencyHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_bins(max_bins: usize) -> Self {
        Self {
            counts: BTreeMap::new(),
            total: 0,
            resolution_us: 1,
            max_bins: max_bins.max(2),
        }
    }

    pub fn record_ms(&mut self, ms: f64) {
        let us = (ms.max(0.0) * 1000.0).round() as u64;
        *self.counts.entry(us / self.resolution_us).or_default() += 1;
        self.total += 1;
        while self.counts.len() > self.max_bins {
            self.coarsen();
        }
    }

    fn coarsen(&mut self) {
        self.resolution_us *= 2;
        let mut merged = BTreeMap::new();
        for (k, c) in std::mem::take(&mut self.counts) {
            *merged.entry(k / 2).or_insert(0) += c;
        }
        self.counts = merged;
    }

    pub fn record_secs(&mut self, secs: f64) {
        self.record_ms(secs * 1000.0);
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    pub fn distinct_values(&self) -> usize {
        self.counts.len()
    }

    /// Current bucket width in microseconds.
    pub fn resolution_us(&self) -> u64 {
        self.resolution_us
    }

    pub fn percentile_ms(&self, p: f64) -> Result<f64, MetricsError> {
        let r = rank(p, self.total as usize)? as u64;
        let mut seen = 0;
        for (&k, &c) in &self.counts {
            seen += c;
            if seen >= r {
                return Ok((k * self.resolution_us) as f64 / 1000.0);
            }
        }
        unreachable!("rank never exceeds total")
    }

    pub fn summary(&self) -> LatencySummary {
        if self.total == 0 {
            return LatencySummary::default();
        }
        let q = |p| self.percentile_ms(p).expect("non-empty");
        LatencySummary {
            count: self.total,
            p50_ms: q(50.0),
            p95_ms: q(95.0),
            p99_ms: q(99.0),
            max_ms: q(100.0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JitterSummary {
    pub count: usize,
    pub median_ms: f64,
    pub p25_ms: f64,
    pub p75_ms: f64,
    pub max_ms: f64,
}

/// Summary of `|actual - intended|` over (intended, actual) pairs in seconds.
pub fn jitter(pairs: &[(f64, f64)]) -> JitterSummary {
    if pairs.is_empty() {
        return JitterSummary::default();
    }
    let devs: Vec<f64> = pairs.iter().map(|(i, a)| (a - i).abs() * 1000.0).collect();
    let q = |p| percentile(&devs, p).expect("non-empty");
    JitterSummary {
        count: devs.len(),
        median_ms: q(50.0),
        p25_ms: q(25.0),
        p75_ms: q(75.0),
        max_ms: q(100.0),
    }
}

/// Checks a delivered stream for repeats of the same (kind, [user,] content)
/// inside `window`. Keys are compared as strings, independent of the bus's
/// hash. Memory is bounded by the number of keys seen within one window.
#[derive(Debug, Clone)]
pub struct DuplicateChecker {
    window: f64,
    mode: KeyMode,
    last: HashMap<(EventKind, String, String), f64>,
    order: VecDeque<(f64, (EventKind, String, String))>,
    delivered: u64,
    duplicates: u64,
}

impl DuplicateChecker {
    pub fn new(window: f64, mode: KeyMode) -> Self {
        Self {
            window,
            mode,
            last: HashMap::new(),
            order: VecDeque::new(),
            delivered: 0,
            duplicates: 0,
        }
    }

    /// Records a delivered event; returns whether it repeats a recent one.
    pub fn observe(&mut self, kind: EventKind, timestamp: f64, user: &str, content: &str) -> bool {
        while let Some((t, _)) = self.order.front() {
            if timestamp - *t < self.window {
                break;
            }
            let (t, key) = self.order.pop_front().expect("front exists");
            if self.last.get(&key) == Some(&t) {
                self.last.remove(&key);
            }
        }
        let user = match self.mode {
            KeyMode::ContentOnly => String::new(),
            KeyMode::UserAndContent => user.to_string(),
        };
        let key = (kind, user, content.to_string());
        self.delivered += 1;
        let dup = matches!(self.last.get(&key), Some(&t) if timestamp - t < self.window);
        if dup {
            self.duplicates += 1;
        }
        self.last.insert(key.clone(), timestamp);
        self.order.push_back((timestamp, key));
        dup
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn duplicate_rate(&self) -> f64 {
        if self.delivered == 0 {
            0.0
        } else {
            self.duplicates as f64 / self.delivered as f64
        }
    }

    pub fn tracked_keys(&self) -> usize {
        self.last.len()
    }
}

/// Resident set size of this process in bytes, where the platform exposes it.
pub fn process_rss_bytes() -> Option<u64> {
    let statm = std::fs::read_to_string("/proc/self/statm").ok()?;
    let pages: u64 = statm.split_whitespace().nth(1)?.parse().ok()?;
    Some(pages * 4096)
}
