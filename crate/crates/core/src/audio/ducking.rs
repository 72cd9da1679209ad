use serde::{Deserialize, Serialize};

use super::{AudioError, PcmBuffer};

/// Linear gain for an attenuation in dB.
pub fn duck_gain_factor(attenuation_db: f64) -> Result<f64, AudioError> {
    if !(attenuation_db.is_finite() && attenuation_db >= 0.0) {
        return Err(AudioError::BadAttenuation(attenuation_db));
    }
    Ok(10f64.powf(-attenuation_db / 20.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DuckingConfig {
    pub attenuation_db: f64,
    /// Seconds to ramp between unducked and ducked gain.
    pub ramp: f64,
}

impl Default for DuckingConfig {
    fn default() -> Self {
        Self {
            attenuation_db: 12.0,
            ramp: 0.050,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DuckEvent {
    TtsStart { t: f64 },
    TtsStop { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ramp {
    start: f64,
    from: f64,
    to: f64,
}

/// BGM gain state machine: ducked while at least one TTS utterance is
/// active, unducked otherwise, with linear ramps on every transition.
#[derive(Debug, Clone)]
pub struct Ducker {
    factor: f64,
    ramp_len: f64,
    active: u32,
    last_t: f64,
    ramps: Vec<Ramp>,
}

impl Ducker {
    pub fn new(cfg: DuckingConfig) -> Result<Self, AudioError> {
        Ok(Self {
            factor: duck_gain_factor(cfg.attenuation_db)?,
            ramp_len: cfg.ramp.max(0.0),
            active: 0,
            last_t: f64::NEG_INFINITY,
            ramps: Vec::new(),
        })
    }

    /// Replays a start/stop stream.
    pub fn from_events(cfg: DuckingConfig, events: &[DuckEvent]) -> Result<Self, AudioError> {
        let mut d = Self::new(cfg)?;
        for ev in events {
            match *ev {
                DuckEvent::TtsStart { t } => d.tts_start(t)?,
                DuckEvent::TtsStop { t } => d.tts_stop(t)?,
            }
        }
        Ok(d)
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn active_utterances(&self) -> u32 {
        self.active
    }

    fn check_order(&mut self, t: f64) -> Result<(), AudioError> {
        if t < self.last_t {
            return Err(AudioError::OutOfOrder {
                at: t,
                last: self.last_t,
            });
        }
        self.last_t = t;
        Ok(())
    }

    fn retarget(&mut self, t: f64, to: f64) {
        let from = self.gain_at(t);
        // keep only ramps that started before t; a new target supersedes them
        self.ramps.retain(|r| r.start < t);
        self.ramps.push(Ramp { start: t, from, to });
    }

    pub fn tts_start(&mut self, t: f64) -> Result<(), AudioError> {
        self.check_order(t)?;
        self.active += 1;
        if self.active == 1 {
            self.retarget(t, self.factor);
        }
        Ok(())
    }

    pub fn tts_stop(&mut self, t: f64) -> Result<(), AudioError> {
        if self.active == 0 {
            return Err(AudioError::UnmatchedStop(t));
        }
        self.check_order(t)?;
        self.active -= 1;
        if self.active == 0 {
            self.retarget(t, 1.0);
        }
        Ok(())
    }

    /// BGM gain at time `t`.
    pub fn gain_at(&self, t: f64) -> f64 {
        let idx = self.ramps.partition_point(|r| r.start <= t);
        if idx == 0 {
            return 1.0;
        }
        let r = self.ramps[idx - 1];
        if self.ramp_len <= 0.0 {
            return r.to;
        }
        let frac = (t - r.start) / self.ramp_len;
        if frac >= 1.0 {
            return r.to;
        }
        r.from + (r.to - r.from) * frac
    }

    /// Drops ramp history that can no longer affect times `>= t`.
    pub fn compact(&mut self, t: f64) {
        let idx = self.ramps.partition_point(|r| r.start <= t);
        if idx > 1 {
            self.ramps.drain(..idx - 1);
        }
    }

    /// Scales a BGM buffer whose first frame plays at `t0`.
    pub fn apply(&self, bgm: &mut PcmBuffer, t0: f64) {
        let ch = bgm.channels as usize;
        let rate = f64::from(bgm.sample_rate);
        for (i, frame) in bgm.samples.chunks_mut(ch).enumerate() {
            let g = self.gain_at(t0 + i as f64 / rate);
            for s in frame {
                *s = ((f64::from(*s) * g) as i64).clamp(i64::from(i16::MIN), i64::from(i16::MAX)) as i16;
            }
        }
    }
}
