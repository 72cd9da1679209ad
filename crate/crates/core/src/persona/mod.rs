//! Broadcast host personas and the per-song segment protocol.
//!
//! A [`PersonaConfig`] is a portable JSON host identity. [`PersonaStore`]
//! holds the active one behind an atomic pointer so swaps are wait-free for
//! readers. Each song gets four speech segments ([`plan_segments`]); a
//! [`SongRun`] walks them on the simulated clock through the [`LlmClient`]
//! and [`TtsClient`] seams.

mod broadcast;
mod config;
mod llm;
mod segments;
mod template;
mod tts;

pub use broadcast::{run_segment, SegmentOutcome, SegmentRecord, SongRun, StepEvent};
pub use config::{bundled_persona, load_persona, PersonaConfig, PersonaStore, BUNDLED_PERSONAS};
#[cfg(feature = "http-llm")]
pub use llm::{HttpLlmClient, HttpLlmConfig};
pub use llm::{LatencyModel, LlmClient, LlmError, LlmReply, LlmRequest, MockLlm};
pub use segments::{plan_segments, Segment, SegmentConfig, SegmentPlan, SegmentState};
pub use template::{render_template, SongContext};
pub use tts::{MockTts, TtsClient, TtsError, TtsOutput, VoiceParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("invalid persona JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("persona field {field} is invalid: {reason}")]
    Invalid { field: &'static str, reason: &'static str },
    #[error("unknown bundled persona {0:?}")]
    UnknownPersona(String),
    #[error("song context invalid: {0}")]
    Song(&'static str),
    #[error("segment trigger fraction for {segment:?} must lie in its window, got {got}")]
    TriggerOutsideWindow { segment: Segment, got: f64 },
    #[error("segment {0:?} is not pending")]
    NotPending(Segment),
    #[error("segment {segment:?} not due until {trigger} s (now {now} s)")]
    NotDue { segment: Segment, trigger: f64, now: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
