//! Constant-velocity danmaku lanes.
//!
//! Every message enters at the right edge `x = W` and scrolls left at the
//! shared velocity `v`. Because all messages in a lane move at the same
//! speed, the gap between two of them never changes after launch, so a lane
//! only has to wait until its last message has fully entered the screen plus
//! the safety gap:
//!
//! ```text
//! available(k) = t_last + (w_last + g) / v
//! ```
//!
//! Lanes are kept in a min-heap keyed by that time. A new message takes the
//! earliest-available lane if it is free now and otherwise goes to the
//! overload policy.

mod measure;
mod overlap;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use measure::{is_wide, GlyphWidthModel, TextMeasure};
pub use overlap::{check_overlap, has_overlap, OVERLAP_EPSILON_PX};

#[derive(Debug, Error, PartialEq)]
pub enum LaneError {
    #[error("invalid scheduler config: {0}")]
    InvalidConfig(&'static str),
    #[error("lane {0} out of range")]
    NoSuchLane(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    /// Container width `W` in pixels.
    pub container_width: f64,
    /// Scroll speed `v` in px/s.
    pub velocity: f64,
    /// Safety gap `g` in pixels.
    pub gap: f64,
    pub lane_count: usize,
    pub glyph_width: f64,
    pub wide_glyph_factor: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            container_width: 1920.0,
            velocity: 110.0,
            gap: 20.0,
            lane_count: 4,
            glyph_width: 12.0,
            wide_glyph_factor: 2.0,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), LaneError> {
        if !(self.velocity.is_finite() && self.velocity > 0.0) {
            return Err(LaneError::InvalidConfig("velocity must be > 0"));
        }
        if !(self.gap.is_finite() && self.gap >= 0.0) {
            return Err(LaneError::InvalidConfig("gap must be >= 0"));
        }
        if self.lane_count == 0 {
            return Err(LaneError::InvalidConfig("lane_count must be >= 1"));
        }
        if !(self.container_width.is_finite() && self.container_width > 0.0) {
            return Err(LaneError::InvalidConfig("container_width must be > 0"));
        }
        if !(self.glyph_width.is_finite() && self.glyph_width >= 0.0) {
            return Err(LaneError::InvalidConfig("glyph_width must be >= 0"));
        }
        if !(self.wide_glyph_factor.is_finite() && self.wide_glyph_factor > 0.0) {
            return Err(LaneError::InvalidConfig("wide_glyph_factor must be > 0"));
        }
        Ok(())
    }

    pub fn glyph_model(&self) -> GlyphWidthModel {
        GlyphWidthModel::new(self.glyph_width, self.wide_glyph_factor)
    }

    /// Horizontal position of a message's left edge `t - emit_time` seconds
    /// after launch.
    pub fn position(&self, emit_time: f64, t: f64) -> f64 {
        self.container_width - self.velocity * (t - emit_time)
    }
}

/// Width of `text` under the config's glyph model.
pub fn measure_text_width(text: &str, cfg: &SchedulerConfig) -> f64 {
    cfg.glyph_model().width(text)
}

/// Earliest time a lane whose last message (width `last_width`) launched at
/// `last_emit` can take another one.
pub fn available_time(last_emit: f64, last_width: f64, cfg: &SchedulerConfig) -> f64 {
    last_emit + (last_width + cfg.gap) / cfg.velocity
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneState {
    pub lane: usize,
    pub available_time: f64,
    pub last_width: f64,
    pub last_emit_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveDanmaku {
    pub id: u64,
    pub lane: usize,
    pub text: String,
    pub user: String,
    pub width: f64,
    pub emit_time: f64,
}

/// A live message with its position resolved at some instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionedDanmaku {
    pub id: u64,
    pub lane: usize,
    pub text: String,
    pub width: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanmakuMsg {
    pub text: String,
    pub user: String,
}

impl DanmakuMsg {
    pub fn new(text: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            user: user.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum EmitOutcome {
    Emitted {
        lane: usize,
    },
    /// Held by the wait-queue overload policy.
    Queued,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum OverloadPolicy {
    #[default]
    Drop,
    /// Hold up to `capacity` messages in FIFO order and launch them as lanes
    /// free up; overflow is dropped.
    WaitQueue { capacity: usize },
}

/// How a lane is picked. `NaiveRoundRobin` ignores lane availability and
/// exists only as an ablation baseline; it can and will overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaunchRule {
    #[default]
    AvailableTime,
    NaiveRoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LaneKey {
    available: f64,
    lane: usize,
}

impl Eq for LaneKey {}

impl PartialOrd for LaneKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LaneKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.available
            .total_cmp(&other.available)
            .then(self.lane.cmp(&other.lane))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerStats {
    pub offered: u64,
    pub emitted: u64,
    pub dropped: u64,
    pub queued: u64,
    pub retired: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSnapshotEntry {
    pub k: usize,
    pub avail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSnapshotEntry {
    pub lane: usize,
    pub x: f64,
    pub width: f64,
    pub text: String,
}

/// Wire form of the scheduler state pushed to stream subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSnapshot {
    pub t: f64,
    pub lanes: Vec<LaneSnapshotEntry>,
    pub active: Vec<ActiveSnapshotEntry>,
    pub drops: u64,
}

pub struct LaneScheduler {
    cfg: SchedulerConfig,
    measure: Box<dyn TextMeasure>,
    heap: BinaryHeap<Reverse<LaneKey>>,
    lanes: Vec<LaneState>,
    active: Vec<ActiveDanmaku>,
    wait: VecDeque<DanmakuMsg>,
    policy: OverloadPolicy,
    rule: LaunchRule,
    round_robin: usize,
    next_id: u64,
    stats: SchedulerStats,
}

impl std::fmt::Debug for LaneScheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LaneScheduler")
            .field("cfg", &self.cfg)
            .field("lanes", &self.lanes)
            .field("active", &self.active.len())
            .field("stats", &self.stats)
            .finish()
    }
}

impl LaneScheduler {
    pub fn new(cfg: SchedulerConfig) -> Result<Self, LaneError> {
        let measure = Box::new(cfg.glyph_model());
        Self::with_measure(cfg, measure)
    }

    pub fn with_measure(cfg: SchedulerConfig, measure: Box<dyn TextMeasure>) -> Result<Self, LaneError> {
        cfg.validate()?;
        let lanes: Vec<LaneState> = (0..cfg.lane_count)
            .map(|lane| LaneState {
                lane,
                available_time: 0.0,
                last_width: 0.0,
                last_emit_time: 0.0,
            })
            .collect();
        let heap = lanes
            .iter()
            .map(|l| {
                Reverse(LaneKey {
                    available: l.available_time,
                    lane: l.lane,
                })
            })
            .collect();
        Ok(Self {
            cfg,
            measure,
            heap,
            lanes,
            active: Vec::new(),
            wait: VecDeque::new(),
            policy: OverloadPolicy::Drop,
            rule: LaunchRule::AvailableTime,
            round_robin: 0,
            next_id: 0,
            stats: SchedulerStats::default(),
        })
    }

    pub fn with_policy(mut self, policy: OverloadPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_launch_rule(mut self, rule: LaunchRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn stats(&self) -> SchedulerStats {
        self.stats
    }

    pub fn drops(&self) -> u64 {
        self.stats.dropped
    }

    pub fn lane_states(&self) -> &[LaneState] {
        &self.lanes
    }

    pub fn active(&self) -> &[ActiveDanmaku] {
        &self.active
    }

    pub fn wait_queue_len(&self) -> usize {
        self.wait.len()
    }

    pub fn measure(&self, text: &str) -> f64 {
        self.measure.width(text)
    }

    /// Earliest instant any lane can accept a message.
    pub fn next_available(&self) -> f64 {
        self.heap.peek().map(|Reverse(k)| k.available).unwrap_or(0.0)
    }

    /// Offers a message at `t_now`.
    pub fn try_emit(&mut self, msg: DanmakuMsg, t_now: f64) -> EmitOutcome {
        self.stats.offered += 1;
        if self.rule == LaunchRule::NaiveRoundRobin {
            let lane = self.round_robin % self.cfg.lane_count;
            self.round_robin += 1;
            self.launch(lane, msg, t_now);
            return EmitOutcome::Emitted { lane };
        }
        // FIFO fairness: nothing jumps ahead of messages already waiting.
        if self.wait.is_empty() {
            if let Some(lane) = self.take_free_lane(t_now) {
                self.launch(lane, msg, t_now);
                return EmitOutcome::Emitted { lane };
            }
        }
        self.overload(msg)
    }

    fn take_free_lane(&mut self, t_now: f64) -> Option<usize> {
        match self.heap.peek() {
            Some(Reverse(key)) if key.available <= t_now => {
                let lane = key.lane;
                self.heap.pop();
                Some(lane)
            }
            _ => None,
        }
    }

    fn launch(&mut self, lane: usize, msg: DanmakuMsg, t_now: f64) {
        let width = self.measure.width(&msg.text);
        let available = available_time(t_now, width, &self.cfg);
        let state = &mut self.lanes[lane];
        state.available_time = available;
        state.last_width = width;
        state.last_emit_time = t_now;
        if self.rule == LaunchRule::AvailableTime {
            self.heap.push(Reverse(LaneKey { available, lane }));
        }
        self.next_id += 1;
        self.active.push(ActiveDanmaku {
            id: self.next_id,
            lane,
            text: msg.text,
            user: msg.user,
            width,
            emit_time: t_now,
        });
        self.stats.emitted += 1;
    }

    fn overload(&mut self, msg: DanmakuMsg) -> EmitOutcome {
        match self.policy {
            OverloadPolicy::WaitQueue { capacity } if self.wait.len() < capacity => {
                self.wait.push_back(msg);
                self.stats.queued += 1;
                EmitOutcome::Queued
            }
            _ => {
                self.stats.dropped += 1;
                EmitOutcome::Dropped
            }
        }
    }

    /// Launches queued messages whose lanes have freed up by `t_now`.
    pub fn pump(&mut self, t_now: f64) -> usize {
        let mut launched = 0;
        while !self.wait.is_empty() {
            let Some(lane) = self.take_free_lane(t_now) else { break };
            if let Some(msg) = self.wait.pop_front() {
                self.launch(lane, msg, t_now);
                launched += 1;
            }
        }
        launched
    }

    /// Places a message in `lane` at `t` without consulting or updating the
    /// heap. Used to build deliberate violations for checker tests.
    pub fn force_spawn(&mut self, lane: usize, text: &str, t: f64) -> Result<u64, LaneError> {
        if lane >= self.cfg.lane_count {
            return Err(LaneError::NoSuchLane(lane));
        }
        self.next_id += 1;
        let width = self.measure.width(text);
        self.active.push(ActiveDanmaku {
            id: self.next_id,
            lane,
            text: text.to_string(),
            user: String::new(),
            width,
            emit_time: t,
        });
        Ok(self.next_id)
    }

    /// Flushes the wait queue, retires messages that have fully left the
    /// screen and returns the rest with positions at `t_now`.
    pub fn tick(&mut self, t_now: f64) -> Vec<PositionedDanmaku> {
        self.pump(t_now);
        let cfg = &self.cfg;
        let before = self.active.len();
        self.active
            .retain(|d| cfg.position(d.emit_time, t_now) + d.width >= 0.0);
        self.stats.retired += (before - self.active.len()) as u64;
        self.positions(t_now)
    }

    /// Positions at `t` without mutating anything.
    pub fn positions(&self, t: f64) -> Vec<PositionedDanmaku> {
        self.active
            .iter()
            .map(|d| PositionedDanmaku {
                id: d.id,
                lane: d.lane,
                text: d.text.clone(),
                width: d.width,
                x: self.cfg.position(d.emit_time, t),
            })
            .collect()
    }

    pub fn snapshot(&self, t: f64) -> LaneSnapshot {
        LaneSnapshot {
            t,
            lanes: self
                .lanes
                .iter()
                .map(|l| LaneSnapshotEntry {
                    k: l.lane,
                    avail: l.available_time,
                })
                .collect(),
            active: self
                .positions(t)
                .into_iter()
                .filter(|p| p.x + p.width >= 0.0)
                .map(|p| ActiveSnapshotEntry {
                    lane: p.lane,
                    x: p.x,
                    width: p.width,
                    text: p.text,
                })
                .collect(),
            drops: self.stats.dropped,
        }
    }
}
