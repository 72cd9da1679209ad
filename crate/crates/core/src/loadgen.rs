//! Seeded synthetic interaction traffic.
//!
//! Per whole second `t` the generator draws `n ~ Poisson(rate)` danmaku with
//! uniform sub-second offsets. When `floor(t)` is a multiple of the storm
//! period, a Bernoulli draw decides whether a gift storm fires: `gift_peak`
//! gifts spaced `60 / gift_peak` seconds apart starting at `t`.
//!
//! Arrival times come from a ChaCha8 stream seeded with `seed` (stream 0).
//! Texts and user names come from an independent ChaCha8 stream (stream 1)
//! so the arrival process does not depend on how payloads are synthesised.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventKind, LiveEvent};

#[derive(Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("invalid load profile: {0}")]
    InvalidProfile(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadProfile {
    pub duration: f64,
    /// Mean danmaku per second.
    pub dmk_rate: f64,
    pub gift_peak: u32,
    pub storm_period: u32,
    pub storm_probability: f64,
    pub seed: u64,
}

impl Default for LoadProfile {
    fn default() -> Self {
        Self {
            duration: 3600.0,
            dmk_rate: 12.0,
            gift_peak: 50,
            storm_period: 600,
            storm_probability: 0.15,
            seed: 42,
        }
    }
}

impl LoadProfile {
    pub fn validate(&self) -> Result<(), LoadError> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(LoadError::InvalidProfile("duration must be >= 0"));
        }
        if !(self.dmk_rate.is_finite() && self.dmk_rate >= 0.0) {
            return Err(LoadError::InvalidProfile("dmk_rate must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.storm_probability) {
            return Err(LoadError::InvalidProfile("storm_probability must be in [0, 1]"));
        }
        if self.storm_period == 0 {
            return Err(LoadError::InvalidProfile("storm_period must be >= 1"));
        }
        Ok(())
    }

    /// 100 danmaku/s for 60 s, no storms.
    pub fn stress_testcase1() -> Self {
        Self {
            duration: 60.0,
            dmk_rate: 100.0,
            gift_peak: 0,
            storm_period: 600,
            storm_probability: 0.0,
            seed: 42,
        }
    }

    /// Named presets accepted by the CLIs.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "testcase1" => Some(Self::stress_testcase1()),
            "baseline" => Some(Self::default()),
            _ => None,
        }
    }
}

/// Largest rate handled by one Knuth product loop; `exp(-500)` is still a
/// normal f64.
const KNUTH_MAX_RATE: f64 = 500.0;

/// Poisson draw by Knuth's product-of-uniforms method. Rates above
/// [`KNUTH_MAX_RATE`] are split into equal parts and summed, which is exact
/// because Poisson variables add.
pub fn poisson_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate.is_nan() || rate <= 0.0 {
        return 0;
    }
    let parts = (rate / KNUTH_MAX_RATE).ceil().max(1.0) as u64;
    let part_rate = rate / parts as f64;
    (0..parts).map(|_| knuth(part_rate, rng)).sum()
}

fn knuth<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    let limit = (-rate).exp();
    let mut k = 0;
    let mut p: f64 = rng.gen();
    while p > limit {
        k += 1;
        p *= rng.gen::<f64>();
    }
    k
}

const PHRASES: &[&str] = &[
    "主播好",
    "这首好听",
    "加油",
    "哈哈哈",
    "来了来了",
    "好听",
    "晚上好",
    "单曲循环",
    "666",
    "nice",
    "前排",
    "再来一首",
    "AI写的吗",
    "好有感觉",
    "听哭了",
    "打卡",
    "爱了",
    "wow",
    "想起了高中",
    "歌词绝了",
];

const GIFTS: &[&str] = &["小心心", "玫瑰", "人气票", "啤酒", "棒棒糖", "墨镜"];

fn danmaku_text(rng: &mut ChaCha8Rng, seq: u64) -> String {
    let parts = rng.gen_range(1..=3);
    let mut text = String::new();
    for _ in 0..parts {
        text.push_str(PHRASES[rng.gen_range(0..PHRASES.len())]);
    }
    // keeps every generated comment distinct so dedup only fires on real repeats
    text.push_str(&format!(" #{seq}"));
    text
}

/// Generates a timestamp-sorted workload. Identical profiles produce
/// identical event lists.
pub fn generate_workload(profile: &LoadProfile) -> Result<Vec<LiveEvent>, LoadError> {
    profile.validate()?;
    let mut arrivals = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut payload = ChaCha8Rng::seed_from_u64(profile.seed);
    payload.set_stream(1);

    let mut events = Vec::new();
    let mut seq = 0u64;
    let mut storm = 0u64;
    let mut step = 0u64;
    loop {
        let t = step as f64;
        if t >= profile.duration {
            break;
        }
        let n = poisson_sample(profile.dmk_rate, &mut arrivals);
        for _ in 0..n {
            let offset: f64 = arrivals.gen();
            seq += 1;
            let user = format!("viewer{}", payload.gen_range(0..5000));
            events.push(LiveEvent::danmaku(t + offset, user, danmaku_text(&mut payload, seq)));
        }
        if step.is_multiple_of(u64::from(profile.storm_period)) && arrivals.gen::<f64>() < profile.storm_probability {
            storm += 1;
            let spacing = 60.0 / f64::from(profile.gift_peak.max(1));
            for i in 0..profile.gift_peak {
                let user = format!("gifter{storm}-{i}");
                let gift = GIFTS[payload.gen_range(0..GIFTS.len())];
                let content = format!("{user} 送出 {gift}");
                events.push(LiveEvent::new(
                    EventKind::Gift,
                    t + f64::from(i) * spacing,
                    user,
                    content,
                ));
            }
        }
        step += 1;
    }
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(events)
}
