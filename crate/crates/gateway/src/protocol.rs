//! Wire types shared by the control endpoints and the stream.
//!
//! Stream frames are JSON objects carrying `"v": STREAM_VERSION` and a
//! `"type"` discriminator. Frames fanned out to every subscriber also carry a
//! `"seq"` number that increases by one per frame; `gap` frames are local to
//! one subscriber and have no `seq`.

use livecast_core::engine::{SessionState, SongSpec};
use livecast_core::loadgen::LoadProfile;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const STREAM_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Session seconds advance with wall seconds scaled by `speed`.
    Simulated,
    /// Session seconds track wall seconds.
    #[default]
    Realtime,
}

/// Load to generate: a preset name or an explicit profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Preset(String),
    Explicit(LoadProfile),
}

impl ProfileSpec {
    pub fn resolve(&self) -> Option<LoadProfile> {
        match self {
            ProfileSpec::Preset(name) => LoadProfile::preset(name),
            ProfileSpec::Explicit(p) => Some(p.clone()),
        }
    }
}

fn unit_speed() -> f64 {
    1.0
}

/// Body of `POST /session/start`. An absent profile means live mode: only
/// injected events reach the bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSession {
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    #[serde(default)]
    pub playlist: Vec<SongSpec>,
    #[serde(default)]
    pub clock: ClockMode,
    /// Session seconds per wall second; only read in simulated mode.
    #[serde(default = "unit_speed")]
    pub speed: f64,
}

impl Default for StartSession {
    fn default() -> Self {
        Self {
            profile: None,
            playlist: Vec::new(),
            clock: ClockMode::Realtime,
            speed: 1.0,
        }
    }
}

/// Upper bound on simulated speed-up.
pub const MAX_SPEED: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentSong {
    pub name: String,
    pub start: f64,
    pub duration: f64,
    pub first: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    /// Empty until the first session starts.
    pub session_id: String,
    pub state: SessionState,
    pub persona: String,
    pub current_song: Option<CurrentSong>,
    pub clock: ClockMode,
    pub speed: f64,
    /// Session clock in seconds.
    pub t: f64,
    /// Longest time one control command held the engine thread, excluding
    /// session start.
    pub control_max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectReply {
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrgentSpeech {
    pub text: String,
}

/// Body of `POST /persona/swap`: a bundled name, `{"name": ...}`, or a full
/// persona object.
pub enum SwapRequest {
    Bundled(String),
    Document(String),
}

impl SwapRequest {
    pub fn from_value(v: Value) -> Self {
        match v {
            Value::String(name) => SwapRequest::Bundled(name),
            Value::Object(ref m) if m.len() == 1 && m.get("name").is_some_and(Value::is_string) => {
                SwapRequest::Bundled(m["name"].as_str().unwrap_or_default().to_string())
            }
            other => SwapRequest::Document(other.to_string()),
        }
    }
}

/// Adds the version and sequence fields to a serialised engine event or
/// notice.
pub fn stamp(mut body: Value, seq: u64) -> String {
    if let Value::Object(m) = &mut body {
        m.insert("v".into(), json!(STREAM_VERSION));
        m.insert("seq".into(), json!(seq));
    }
    body.to_string()
}

pub fn heartbeat(handle: &SessionHandle) -> Value {
    json!({
        "type": "heartbeat",
        "state": handle.state,
        "session_id": handle.session_id,
        "persona": handle.persona,
        "current_song": handle.current_song,
        "clock": handle.clock,
        "t": handle.t,
    })
}

pub fn gap(missed: u64) -> String {
    json!({ "v": STREAM_VERSION, "type": "gap", "missed": missed }).to_string()
}
