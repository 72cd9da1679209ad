use serde::{Deserialize, Serialize};

use crate::event::{EventKind, LiveEvent};
use crate::lanes::{check_overlap, DanmakuMsg, LaneError, LaneScheduler, LaunchRule, OverloadPolicy, SchedulerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub scheduler: SchedulerConfig,
    pub launch_rule: LaunchRule,
    pub policy: OverloadPolicy,
    /// Sampling rate of the overlap check, frames per simulated second.
    pub fps: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            scheduler: SchedulerConfig::default(),
            launch_rule: LaunchRule::AvailableTime,
            policy: OverloadPolicy::Drop,
            fps: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapReplay {
    pub frames: u64,
    pub overlapping_frames: u64,
    pub overlapping_pairs: u64,
    pub overlap_rate: f64,
    pub offered: u64,
    pub emitted: u64,
    pub dropped: u64,
}

/// Feeds the danmaku of `events` through a scheduler at their own
/// timestamps and samples every frame until the screen is empty again.
pub fn replay_overlap(events: &[LiveEvent], cfg: &ReplayConfig) -> Result<OverlapReplay, LaneError> {
    if !(cfg.fps.is_finite() && cfg.fps > 0.0) {
        return Err(LaneError::InvalidConfig("fps must be > 0"));
    }
    let mut sched = LaneScheduler::new(cfg.scheduler.clone())?
        .with_policy(cfg.policy)
        .with_launch_rule(cfg.launch_rule);
    let mut dmk: Vec<&LiveEvent> = events.iter().filter(|e| e.kind == EventKind::Danmaku).collect();
    dmk.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let mut out = OverlapReplay::default();
    let mut next = 0;
    let mut frame: u64 = 0;
    loop {
        let t = frame as f64 / cfg.fps;
        while next < dmk.len() && dmk[next].timestamp <= t {
            let e = dmk[next];
            sched.try_emit(DanmakuMsg::new(e.content.clone(), e.user.clone()), e.timestamp);
            next += 1;
        }
        let positions = sched.tick(t);
        let pairs = check_overlap(&positions);
        out.frames += 1;
        if !pairs.is_empty() {
            out.overlapping_frames += 1;
            out.overlapping_pairs += pairs.len() as u64;
        }
        if next == dmk.len() && positions.is_empty() && sched.wait_queue_len() == 0 {
            break;
        }
        frame += 1;
    }
    let stats = sched.stats();
    out.offered = stats.offered;
    out.emitted = stats.emitted;
    out.dropped = stats.dropped;
    out.overlap_rate = out.overlapping_frames as f64 / out.frames as f64;
    Ok(out)
}
