//! Live interaction events, the session event bus and duplicate filtering.
//!
//! Producers publish from any thread through [`BusPublisher`]; exactly one
//! consumer owns the [`EventBus`] and pulls due events with
//! [`EventBus::drain`]. Out-of-order publishes are buffered and delivered in
//! timestamp order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("event timestamp must be finite and non-negative, got {0}")]
    BadTimestamp(f64),
    #[error("danmaku content must not be empty")]
    EmptyDanmaku,
    #[error("event count must be positive")]
    ZeroCount,
    #[error("dedup window must be positive and finite, got {0}")]
    BadWindow(f64),
    #[error("malformed event JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Danmaku,
    Gift,
    Like,
    Entrance,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [
        EventKind::Danmaku,
        EventKind::Gift,
        EventKind::Like,
        EventKind::Entrance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Danmaku => "danmaku",
            EventKind::Gift => "gift",
            EventKind::Like => "like",
            EventKind::Entrance => "entrance",
        }
    }

    fn tag(self) -> u8 {
        match self {
            EventKind::Danmaku => 1,
            EventKind::Gift => 2,
            EventKind::Like => 3,
            EventKind::Entrance => 4,
        }
    }
}

fn one() -> u32 {
    1
}

/// One captured interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveEvent {
    pub kind: EventKind,
    /// Seconds on the session clock.
    pub timestamp: f64,
    #[serde(default)]
    pub user: String,
    /// Danmaku text or gift name.
    #[serde(default)]
    pub content: String,
    #[serde(default = "one")]
    pub count: u32,
}

impl LiveEvent {
    pub fn new(kind: EventKind, timestamp: f64, user: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            kind,
            timestamp,
            user: user.into(),
            content: content.into(),
            count: 1,
        }
    }

    pub fn danmaku(timestamp: f64, user: impl Into<String>, content: impl Into<String>) -> Self {
        Self::new(EventKind::Danmaku, timestamp, user, content)
    }

    pub fn gift(timestamp: f64, user: impl Into<String>, content: impl Into<String>) -> Self {
        Self::new(EventKind::Gift, timestamp, user, content)
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(EventError::BadTimestamp(self.timestamp));
        }
        if self.kind == EventKind::Danmaku && self.content.is_empty() {
            return Err(EventError::EmptyDanmaku);
        }
        if self.count == 0 {
            return Err(EventError::ZeroCount);
        }
        Ok(())
    }

    /// Parses and validates one event in the injection JSON schema.
    pub fn from_json(text: &str) -> Result<Self, EventError> {
        let ev: LiveEvent = serde_json::from_str(text).map_err(|e| EventError::Json(e.to_string()))?;
        ev.validate()?;
        Ok(ev)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMode {
    #[default]
    ContentOnly,
    UserAndContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    /// Seconds an accepted key suppresses repeats.
    pub window: f64,
    pub key_mode: KeyMode,
    /// Event kinds subject to dedup.
    pub kinds: Vec<EventKind>,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            window: 2.0,
            key_mode: KeyMode::ContentOnly,
            kinds: EventKind::ALL.to_vec(),
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), EventError> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(EventError::BadWindow(self.window));
        }
        Ok(())
    }

    pub fn applies_to(&self, kind: EventKind) -> bool {
        self.kinds.contains(&kind)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// 64-bit FNV-1a over the kind tag, the user (in `UserAndContent` mode) and
/// the content. Fields are length-prefixed so `("ab","c")` and `("a","bc")`
/// never collide structurally.
pub fn dedup_key(event: &LiveEvent, cfg: &DedupConfig) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &[event.kind.tag()]);
    if cfg.key_mode == KeyMode::UserAndContent {
        h = fnv1a(h, &(event.user.len() as u64).to_le_bytes());
        h = fnv1a(h, event.user.as_bytes());
    }
    h = fnv1a(h, &(event.content.len() as u64).to_le_bytes());
    fnv1a(h, event.content.as_bytes())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusStats {
    pub published: u64,
    pub accepted: u64,
    pub rejected_duplicate: u64,
    pub rejected_malformed: u64,
    pub delivered: u64,
}

struct Pending {
    seq: u64,
    event: LiveEvent,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest event,
    // publish order breaking timestamp ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .event
            .timestamp
            .total_cmp(&self.event.timestamp)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct BusInner {
    cfg: DedupConfig,
    pending: BinaryHeap<Pending>,
    // key -> timestamp of the most recent accepted event with that key
    seen: HashMap<u64, f64>,
    seq: u64,
    stats: BusStats,
}

impl BusInner {
    fn publish(&mut self, event: LiveEvent) -> Result<bool, EventError> {
        self.stats.published += 1;
        if let Err(e) = event.validate() {
            self.stats.rejected_malformed += 1;
            return Err(e);
        }
        if self.cfg.applies_to(event.kind) {
            let key = dedup_key(&event, &self.cfg);
            match self.seen.get_mut(&key) {
                Some(last) if (event.timestamp - *last).abs() < self.cfg.window => {
                    self.stats.rejected_duplicate += 1;
                    return Ok(false);
                }
                Some(last) => *last = last.max(event.timestamp),
                None => {
                    self.seen.insert(key, event.timestamp);
                }
            }
        }
        self.stats.accepted += 1;
        self.seq += 1;
        self.pending.push(Pending { seq: self.seq, event });
        Ok(true)
    }
}

/// Cloneable, thread-safe publishing handle onto an [`EventBus`].
#[derive(Clone)]
pub struct BusPublisher {
    inner: Arc<Mutex<BusInner>>,
}

impl BusPublisher {
    /// Returns `Ok(true)` when the event passed dedup and was enqueued.
    pub fn publish(&self, event: LiveEvent) -> Result<bool, EventError> {
        self.inner.lock().publish(event)
    }
}

/// Single-consumer event bus. Owning the bus is what grants the right to
/// drain it; publishing goes through `&self` or a [`BusPublisher`].
pub struct EventBus {
    inner: Arc<Mutex<BusInner>>,
}

impl EventBus {
    pub fn new(cfg: DedupConfig) -> Result<Self, EventError> {
        cfg.validate()?;
        Ok(Self {
            inner: Arc::new(Mutex::new(BusInner {
                cfg,
                pending: BinaryHeap::new(),
                seen: HashMap::new(),
                seq: 0,
                stats: BusStats::default(),
            })),
        })
    }

    pub fn publisher(&self) -> BusPublisher {
        BusPublisher {
            inner: Arc::clone(&self.inner),
        }
    }

    pub fn publish(&self, event: LiveEvent) -> Result<bool, EventError> {
        self.inner.lock().publish(event)
    }

    /// Removes and returns every accepted event with `timestamp <= now`, in
    /// timestamp order, and forgets dedup keys older than the window.
    pub fn drain(&mut self, now: f64) -> Vec<LiveEvent> {
        let mut inner = self.inner.lock();
        let mut out = Vec::new();
        while let Some(top) = inner.pending.peek() {
            if top.event.timestamp > now {
                break;
            }
            if let Some(p) = inner.pending.pop() {
                out.push(p.event);
            }
        }
        let horizon = now - inner.cfg.window;
        inner.seen.retain(|_, last| *last >= horizon);
        inner.stats.delivered += out.len() as u64;
        out
    }

    pub fn stats(&self) -> BusStats {
        self.inner.lock().stats
    }

    pub fn pending_len(&self) -> usize {
        self.inner.lock().pending.len()
    }

    pub fn dedup_entries(&self) -> usize {
        self.inner.lock().seen.len()
    }

    pub fn config(&self) -> DedupConfig {
        self.inner.lock().cfg.clone()
    }
}
