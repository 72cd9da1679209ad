use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{JitterSummary, LatencySummary, MetricsError};
use crate::event::DedupConfig;
use crate::lanes::SchedulerConfig;
use crate::loadgen::LoadProfile;
use crate::reaction::EngagementCounters;

pub const REPORT_VERSION: u32 = 1;
pub const PERCENTILE_METHOD: &str = "nearest-rank";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfigEcho {
    pub seed: u64,
    pub profile: Option<LoadProfile>,
    pub scheduler: SchedulerConfig,
    pub dedup: DedupConfig,
    pub fps: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub songs: u64,
    pub planned: u64,
    pub spoken: u64,
    pub skipped: u64,
    pub by_segment: BTreeMap<String, [u64; 2]>,
    pub llm_latency: LatencySummary,
    pub tts_latency: LatencySummary,
}

impl SegmentStats {
    pub fn record(&mut self, segment: &str, spoken: bool) {
        let e = self.by_segment.entry(segment.to_string()).or_default();
        if spoken {
            self.spoken += 1;
            e[0] += 1;
        } else {
            self.skipped += 1;
            e[1] += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoudnessSummary {
    pub utterances: u64,
    /// Quietest and loudest integrated loudness over measured utterances.
    pub min_lufs: Option<f64>,
    pub max_lufs: Option<f64>,
    pub max_true_peak_dbtp: Option<f64>,
}

impl LoudnessSummary {
    pub fn record(&mut self, lufs: f64, true_peak: f64) {
        self.utterances += 1;
        if lufs.is_finite() {
            self.min_lufs = Some(self.min_lufs.map_or(lufs, |m| m.min(lufs)));
            self.max_lufs = Some(self.max_lufs.map_or(lufs, |m| m.max(lufs)));
        }
        if true_peak.is_finite() {
            self.max_true_peak_dbtp = Some(self.max_true_peak_dbtp.map_or(true_peak, |m| m.max(true_peak)));
        }
    }
}

/// Fields that depend on the host and are excluded from determinism checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallClockInfo {
    pub elapsed_secs: f64,
    pub generated_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub percentile_method: String,
    pub config: RunConfigEcho,
    pub simulated_secs: f64,
    pub frames: u64,
    pub overlapping_frames: u64,
    pub overlap_rate: f64,
    pub duplicate_rate: f64,
    pub offered: u64,
    pub emitted: u64,
    pub drop_count: u64,
    pub dedup_rejected: u64,
    /// Bus receipt to lane launch (danmaku) or FX admission (other kinds),
    /// on the simulated clock. Engine-side only.
    pub latency_by_kind: BTreeMap<String, LatencySummary>,
    pub jitter: JitterSummary,
    pub segments: SegmentStats,
    pub reactions: EngagementCounters,
    pub loudness: LoudnessSummary,
    pub wall: WallClockInfo,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MetricsError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn emit(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Copy with host-dependent fields cleared.
    pub fn without_wall_clock(&self) -> Self {
        Self {
            wall: WallClockInfo::default(),
            ..self.clone()
        }
    }
}
