//! Simulatable engine for a live-stream interaction overlay.
//!
//! The crate is organised around the pieces a broadcast session needs:
//!
//! * [`event`]: the live event model, a timestamp-ordered bus and the
//!   sliding-window duplicate filter.
//! * [`lanes`]: constant-velocity danmaku lanes driven by a min-heap of lane
//!   available-times, plus the overlap checker used to verify them.
//! * [`loadgen`]: seeded synthetic traffic (Poisson danmaku, gift storms).
//! * [`audio`]: PCM gain, background-music ducking, the deferred buffer
//!   release bin and a BS.1770 loudness / true-peak meter.
//! * [`persona`]: persona files, prompt templates, the per-song segment
//!   scheduler and the LLM / TTS adapter seams.
//! * [`reaction`]: keyword-routed quick reactions with cooldown.
//! * [`metrics`]: percentiles, overlap-rate replay, jitter and run reports.
//! * [`engine`]: a session runtime wiring everything together on one
//!   scheduling context.

pub mod audio;
pub mod clock;
pub mod engine;
pub mod event;
pub mod lanes;
pub mod loadgen;
pub mod metrics;
pub mod persona;
pub mod reaction;

pub use clock::{Clock, SimClock, WallClock};
pub use event::{BusPublisher, DedupConfig, EventBus, EventKind, KeyMode, LiveEvent};
pub use lanes::{LaneScheduler, SchedulerConfig};
pub use loadgen::LoadProfile;
