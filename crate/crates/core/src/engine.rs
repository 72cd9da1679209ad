//! Session runtime.
//!
//! One [`Engine`] owns every stateful component and advances them together
//! in fixed frames on the session clock. All mutation happens inside
//! [`Engine::advance_to`] and the control methods, so the engine lives on a
//! single scheduling context; other contexts reach it through a
//! [`BusPublisher`] or by message passing (see the gateway crate).

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{
    apply_gain, enforce_true_peak_ceiling, integrated_loudness, AudioError, Ducker, DuckingConfig, GainConfig,
    PcmBuffer,
};
use crate::event::{BusPublisher, DedupConfig, EventBus, EventError, EventKind, LiveEvent};
use crate::lanes::{
    has_overlap, DanmakuMsg, EmitOutcome, LaneError, LaneScheduler, LaneSnapshot, OverloadPolicy, SchedulerConfig,
};
use crate::loadgen::{generate_workload, LoadError, LoadProfile};
use crate::metrics::{
    DuplicateChecker, JitterSummary, LatencyHistogram, LoudnessSummary, RunConfigEcho, RunReport, SegmentStats,
    WallClockInfo, PERCENTILE_METHOD, REPORT_VERSION,
};
use crate::persona::{
    LatencyModel, LlmClient, LlmRequest, MockLlm, MockTts, PersonaConfig, PersonaError, PersonaStore, Segment,
    SegmentConfig, SegmentState, SongContext, SongRun, StepEvent, TtsClient, VoiceParams,
};
use crate::reaction::{Category, ReactionConfig, ReactionEngine, ReactionError, ReactionMode, ReactionOutcome};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("session already running")]
    AlreadyRunning,
    #[error("session is not running")]
    NotRunning,
    #[error("urgent speech text is empty")]
    EmptyText,
    #[error("frame rate must be > 0")]
    BadFrameRate,
    #[error("speech synthesis failed: {0}")]
    Tts(String),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Lane(#[from] LaneError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Reaction(#[from] ReactionError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub scheduler: SchedulerConfig,
    pub overload: OverloadPolicy,
    pub dedup: DedupConfig,
    pub reaction: ReactionConfig,
    pub segments: SegmentConfig,
    pub ducking: DuckingConfig,
    pub gain: GainConfig,
    /// Simulation step and overlap sampling rate.
    pub fps: f64,
    /// Lane snapshot push rate.
    pub snapshot_hz: f64,
    /// Seeds the mock LLM and TTS of [`Engine::simulated`].
    pub seed: u64,
    pub llm_latency: LatencyModel,
    pub tts_latency: LatencyModel,
    /// Wall time corresponding to session time 0, used for `{Time}`.
    pub wall_epoch: NaiveDateTime,
    /// Boost, limit and meter every utterance (costly; off for long runs).
    pub measure_loudness: bool,
    /// FX events kept for inspection; older ones are discarded.
    pub fx_history: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            scheduler: SchedulerConfig::default(),
            overload: OverloadPolicy::Drop,
            dedup: DedupConfig::default(),
            reaction: ReactionConfig::default(),
            segments: SegmentConfig::default(),
            ducking: DuckingConfig::default(),
            gain: GainConfig::default(),
            fps: 60.0,
            snapshot_hz: 20.0,
            seed: 42,
            llm_latency: LatencyModel::llm_reference(),
            tts_latency: LatencyModel::tts_reference(),
            wall_epoch: NaiveDate::from_ymd_opt(2025, 1, 1)
                .and_then(|d| d.and_hms_opt(20, 0, 0))
                .expect("valid date"),
            measure_loudness: false,
            fx_history: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongSpec {
    pub name: String,
    #[serde(default)]
    pub lyrics: String,
    /// Seconds.
    pub duration: f64,
}

impl SongSpec {
    pub fn new(name: impl Into<String>, duration: f64) -> Self {
        Self {
            name: name.into(),
            lyrics: String::new(),
            duration,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StartRequest {
    #[serde(default)]
    pub profile: Option<LoadProfile>,
    #[serde(default)]
    pub playlist: Vec<SongSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionState {
    Idle,
    Running,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpeechSource {
    Segment { segment: Segment },
    Reaction { category: Category },
    Urgent,
}

/// State changes produced by the engine, in the order they happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum EngineEvent {
    Session {
        state: SessionState,
        t: f64,
    },
    Lanes(LaneSnapshot),
    Event {
        event: LiveEvent,
        /// Lane outcome for danmaku, `None` for FX events.
        lane: Option<EmitOutcome>,
    },
    Song {
        name: String,
        start: f64,
        duration: f64,
        first: bool,
    },
    Segment {
        song: String,
        segment: Segment,
        state: SegmentState,
        t: f64,
    },
    Reaction {
        category: Category,
        mode: ReactionMode,
        user: String,
        text: String,
        t: f64,
    },
    Speech {
        source: SpeechSource,
        text: String,
        start: f64,
        end: f64,
    },
    Persona {
        name: String,
        t: f64,
    },
}

#[derive(Debug, Clone)]
struct Utterance {
    source: SpeechSource,
    text: String,
    duration: f64,
    ready_at: f64,
}

#[derive(Debug, Default)]
struct SpeechQueue {
    urgent: VecDeque<Utterance>,
    scheduled: VecDeque<Utterance>,
    playing: Option<(Utterance, f64)>,
}

impl SpeechQueue {
    /// Next ready utterance; urgent items go first.
    fn pop_ready(&mut self, now: f64) -> Option<Utterance> {
        for q in [&mut self.urgent, &mut self.scheduled] {
            if let Some(pos) = q.iter().position(|u| u.ready_at <= now) {
                return q.remove(pos);
            }
        }
        None
    }

    fn len(&self) -> usize {
        self.urgent.len() + self.scheduled.len() + usize::from(self.playing.is_some())
    }
}

/// Sizes of every growable structure the engine owns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub active_danmaku: usize,
    pub wait_queue: usize,
    pub bus_pending: usize,
    pub dedup_entries: usize,
    pub duplicate_checker_keys: usize,
    pub fx_history: usize,
    pub speech_queue: usize,
    pub histogram_bins: usize,
    pub song_queue: usize,
}

impl Footprint {
    /// Entries whose count follows live traffic. The FX history and the
    /// latency histograms are excluded because both have fixed caps.
    pub fn live_total(&self) -> usize {
        self.active_danmaku
            + self.wait_queue
            + self.bus_pending
            + self.dedup_entries
            + self.duplicate_checker_keys
            + self.speech_queue
            + self.song_queue
    }

    pub fn total(&self) -> usize {
        self.active_danmaku
            + self.wait_queue
            + self.bus_pending
            + self.dedup_entries
            + self.duplicate_checker_keys
            + self.fx_history
            + self.speech_queue
            + self.histogram_bins
            + self.song_queue
    }
}

/// Counters of safety properties checked every frame. All stay zero in a
/// correct run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCounters {
    pub overlapping_frames: u64,
    pub out_of_order_deliveries: u64,
    pub delivered_duplicates: u64,
    pub multiple_inflight: u64,
    pub late_speech: u64,
}

impl InvariantCounters {
    pub fn total(&self) -> u64 {
        self.overlapping_frames
            + self.out_of_order_deliveries
            + self.delivered_duplicates
            + self.multiple_inflight
            + self.late_speech
    }
}

pub struct Engine {
    cfg: EngineConfig,
    state: SessionState,
    frame: u64,
    now: f64,
    bus: EventBus,
    lanes: LaneScheduler,
    reactions: ReactionEngine,
    personas: Arc<PersonaStore>,
    llm: Box<dyn LlmClient>,
    tts: Box<dyn TtsClient>,
    profile: Option<LoadProfile>,
    workload: VecDeque<LiveEvent>,
    songs: VecDeque<SongSpec>,
    song: Option<SongRun>,
    next_song_start: f64,
    first_song_done: bool,
    speech: SpeechQueue,
    ducker: Ducker,
    fx: VecDeque<LiveEvent>,
    fx_admitted: u64,
    last_delivered: f64,
    last_snapshot: Option<f64>,
    // metrics
    latency: BTreeMap<EventKind, LatencyHistogram>,
    duplicates: DuplicateChecker,
    jitter: LatencyHistogram,
    llm_hist: LatencyHistogram,
    tts_hist: LatencyHistogram,
    segment_stats: SegmentStats,
    loudness: LoudnessSummary,
    invariants: InvariantCounters,
    frames: u64,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("state", &self.state)
            .field("now", &self.now)
            .field("footprint", &self.footprint())
            .finish()
    }
}

impl Engine {
    pub fn new(
        cfg: EngineConfig,
        persona: PersonaConfig,
        llm: Box<dyn LlmClient>,
        tts: Box<dyn TtsClient>,
    ) -> Result<Self, EngineError> {
        if !(cfg.fps.is_finite() && cfg.fps > 0.0 && cfg.snapshot_hz > 0.0) {
            return Err(EngineError::BadFrameRate);
        }
        cfg.segments.validate()?;
        let lanes = LaneScheduler::new(cfg.scheduler.clone())?.with_policy(cfg.overload);
        Ok(Self {
            bus: EventBus::new(cfg.dedup.clone())?,
            lanes,
            reactions: ReactionEngine::new(cfg.reaction.clone())?,
            personas: Arc::new(PersonaStore::new(persona)?),
            llm,
            tts,
            ducker: Ducker::new(cfg.ducking)?,
            duplicates: DuplicateChecker::new(cfg.dedup.window, cfg.dedup.key_mode),
            state: SessionState::Idle,
            frame: 0,
            now: 0.0,
            profile: None,
            workload: VecDeque::new(),
            songs: VecDeque::new(),
            song: None,
            next_song_start: 0.0,
            first_song_done: false,
            speech: SpeechQueue::default(),
            fx: VecDeque::new(),
            fx_admitted: 0,
            last_delivered: f64::NEG_INFINITY,
            last_snapshot: None,
            latency: BTreeMap::new(),
            jitter: LatencyHistogram::new(),
            llm_hist: LatencyHistogram::new(),
            tts_hist: LatencyHistogram::new(),
            segment_stats: SegmentStats::default(),
            loudness: LoudnessSummary::default(),
            invariants: InvariantCounters::default(),
            frames: 0,
            cfg,
        })
    }

    /// Engine with the seeded mock LLM and TTS.
    pub fn simulated(cfg: EngineConfig, persona: PersonaConfig) -> Result<Self, EngineError> {
        let llm = MockLlm::new(cfg.seed, cfg.llm_latency.clone());
        let mut tts = MockTts::new(cfg.seed.wrapping_add(1), cfg.tts_latency.clone());
        if !cfg.measure_loudness {
            tts = tts.silent();
        }
        Self::new(cfg, persona, Box::new(llm), Box::new(tts))
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn personas(&self) -> Arc<PersonaStore> {
        Arc::clone(&self.personas)
    }

    pub fn publisher(&self) -> BusPublisher {
        self.bus.publisher()
    }

    pub fn lanes(&self) -> &LaneScheduler {
        &self.lanes
    }

    pub fn reactions(&self) -> &ReactionEngine {
        &self.reactions
    }

    pub fn current_song(&self) -> Option<&SongRun> {
        self.song.as_ref()
    }

    pub fn fx_admitted(&self) -> u64 {
        self.fx_admitted
    }

    pub fn recent_fx(&self) -> impl Iterator<Item = &LiveEvent> {
        self.fx.iter()
    }

    pub fn invariants(&self) -> InvariantCounters {
        self.invariants
    }

    pub fn bgm_gain(&self) -> f64 {
        self.ducker.gain_at(self.now)
    }

    pub fn start(&mut self, req: StartRequest) -> Result<Vec<EngineEvent>, EngineError> {
        if self.state == SessionState::Running {
            return Err(EngineError::AlreadyRunning);
        }
        for s in &req.playlist {
            SongContext::new(s.name.clone(), s.duration, 0.0, false).validate()?;
        }
        if let Some(p) = &req.profile {
            self.workload = generate_workload(p)?.into_iter().map(|e| self.shift(e)).collect();
        }
        self.profile = req.profile;
        self.songs = req.playlist.into();
        self.next_song_start = self.now;
        self.state = SessionState::Running;
        let mut out = vec![EngineEvent::Session {
            state: SessionState::Running,
            t: self.now,
        }];
        self.maybe_start_song(&mut out)?;
        self.step_song(self.now, &mut out);
        Ok(out)
    }

    fn shift(&self, mut e: LiveEvent) -> LiveEvent {
        e.timestamp += self.now;
        e
    }

    pub fn stop(&mut self) -> Result<Vec<EngineEvent>, EngineError> {
        if self.state != SessionState::Running {
            return Err(EngineError::NotRunning);
        }
        self.state = SessionState::Stopped;
        self.workload.clear();
        self.songs.clear();
        self.song = None;
        Ok(vec![EngineEvent::Session {
            state: SessionState::Stopped,
            t: self.now,
        }])
    }

    /// Publishes an externally captured event; returns whether dedup kept it.
    pub fn inject(&mut self, event: LiveEvent) -> Result<bool, EngineError> {
        if self.state != SessionState::Running {
            return Err(EngineError::NotRunning);
        }
        Ok(self.bus.publish(event)?)
    }

    /// Operator speech, queued ahead of scheduled segments with no cooldown.
    pub fn insert_urgent(&mut self, text: &str) -> Result<(), EngineError> {
        if self.state != SessionState::Running {
            return Err(EngineError::NotRunning);
        }
        if text.trim().is_empty() {
            return Err(EngineError::EmptyText);
        }
        let voice = VoiceParams::of(&self.personas.current());
        let out = self
            .tts
            .synthesize(text, &voice, "urgent")
            .map_err(|e| EngineError::Tts(e.to_string()))?;
        self.tts_hist.record_secs(out.latency);
        self.measure(&out.pcm);
        self.speech.urgent.push_back(Utterance {
            source: SpeechSource::Urgent,
            text: text.to_string(),
            duration: out.pcm.duration(),
            ready_at: self.now + out.latency,
        });
        Ok(())
    }

    pub fn swap_persona(&mut self, persona: PersonaConfig) -> Result<EngineEvent, EngineError> {
        let name = persona.persona_name.clone();
        self.personas.hot_swap(persona)?;
        Ok(EngineEvent::Persona { name, t: self.now })
    }

    fn wall(&self) -> NaiveDateTime {
        self.cfg.wall_epoch + TimeDelta::milliseconds((self.now * 1000.0) as i64)
    }

    fn maybe_start_song(&mut self, out: &mut Vec<EngineEvent>) -> Result<(), EngineError> {
        if let Some(run) = &self.song {
            if self.now < run.context().end_time() {
                return Ok(());
            }
            // finished or cut short; unresolved segments count as skipped
            for p in run.plans() {
                if !matches!(p.state, SegmentState::Spoken | SegmentState::Skipped) {
                    self.segment_stats.record(p.segment.as_str(), false);
                }
            }
            self.song = None;
        }
        if self.now < self.next_song_start {
            return Ok(());
        }
        let Some(spec) = self.songs.pop_front() else {
            return Ok(());
        };
        let first = !self.first_song_done;
        self.first_song_done = true;
        let ctx =
            SongContext::new(spec.name.clone(), spec.duration, self.next_song_start, first).with_lyrics(spec.lyrics);
        self.next_song_start = ctx.end_time();
        let run = SongRun::start(ctx, &self.personas, &self.cfg.segments)?;
        self.segment_stats.songs += 1;
        self.segment_stats.planned += run.plans().len() as u64;
        out.push(EngineEvent::Song {
            name: spec.name,
            start: run.context().start_time,
            duration: spec.duration,
            first,
        });
        self.song = Some(run);
        Ok(())
    }

    /// Steps whole frames up to and including `t`.
    pub fn advance_to(&mut self, t: f64) -> Vec<EngineEvent> {
        let mut out = Vec::new();
        loop {
            let ft = (self.frame + 1) as f64 / self.cfg.fps;
            if ft > t {
                break;
            }
            self.frame += 1;
            self.step(ft, &mut out);
        }
        out
    }

    /// True once the workload, playlist, speech and screen are all drained.
    pub fn is_quiet(&self) -> bool {
        self.workload.is_empty()
            && self.songs.is_empty()
            && self.song.is_none()
            && self.bus.pending_len() == 0
            && self.speech.len() == 0
            && self.lanes.active().is_empty()
            && self.lanes.wait_queue_len() == 0
    }

    /// Advances until [`Engine::is_quiet`] or `max_t`.
    pub fn run_until_quiet(&mut self, max_t: f64) {
        let step = 1.0;
        while self.now < max_t {
            self.advance_to((self.now + step).min(max_t));
            if self.is_quiet() {
                break;
            }
        }
    }

    fn step(&mut self, t: f64, out: &mut Vec<EngineEvent>) {
        self.now = t;
        self.frames += 1;
        if self.state == SessionState::Running {
            while self.workload.front().is_some_and(|e| e.timestamp <= t) {
                let e = self.workload.pop_front().expect("front checked");
                // generated events are valid by construction
                let _ = self.bus.publish(e);
            }
        }
        for ev in self.bus.drain(t) {
            self.deliver(ev, t, out);
        }
        if let Err(e) = self.maybe_start_song(out) {
            log::warn!("song start failed: {e}");
        }
        self.step_song(t, out);
        self.step_speech(t, out);

        let positions = self.lanes.tick(t);
        if has_overlap(&positions) {
            self.invariants.overlapping_frames += 1;
        }
        let period = 1.0 / self.cfg.snapshot_hz;
        if self.last_snapshot.is_none_or(|last| t - last >= period - 1e-9) {
            self.last_snapshot = Some(t);
            out.push(EngineEvent::Lanes(self.lanes.snapshot(t)));
        }
        self.ducker.compact(t);
    }

    fn deliver(&mut self, ev: LiveEvent, t: f64, out: &mut Vec<EngineEvent>) {
        if ev.timestamp < self.last_delivered {
            self.invariants.out_of_order_deliveries += 1;
        }
        self.last_delivered = ev.timestamp;
        if self.cfg.dedup.applies_to(ev.kind) && self.duplicates.observe(ev.kind, ev.timestamp, &ev.user, &ev.content) {
            self.invariants.delivered_duplicates += 1;
        }
        let lane = if ev.kind == EventKind::Danmaku {
            let outcome = self
                .lanes
                .try_emit(DanmakuMsg::new(ev.content.clone(), ev.user.clone()), t);
            if matches!(outcome, EmitOutcome::Emitted { .. }) {
                self.latency.entry(ev.kind).or_default().record_secs(t - ev.timestamp);
            }
            self.react(&ev, t, out);
            Some(outcome)
        } else {
            self.latency.entry(ev.kind).or_default().record_secs(t - ev.timestamp);
            self.fx_admitted += 1;
            if self.fx.len() == self.cfg.fx_history {
                self.fx.pop_front();
            }
            if self.cfg.fx_history > 0 {
                self.fx.push_back(ev.clone());
            }
            None
        };
        out.push(EngineEvent::Event { event: ev, lane });
    }

    fn react(&mut self, ev: &LiveEvent, t: f64, out: &mut Vec<EngineEvent>) {
        let ReactionOutcome::Fired { category, mode, text } = self.reactions.maybe_react(ev, t) else {
            return;
        };
        out.push(EngineEvent::Reaction {
            category,
            mode,
            user: ev.user.clone(),
            text: text.clone(),
            t,
        });
        let persona = self.personas.current();
        let (speech, mut ready) = match mode {
            ReactionMode::StaticSpeech => (text, t),
            ReactionMode::LlmEmpathy => {
                let req = LlmRequest {
                    system_prompt: persona.system_prompt.clone(),
                    user_prompt: text,
                    max_output_tokens: 60,
                    label: "reaction".into(),
                };
                match self.llm.complete(&req) {
                    Ok(r) => {
                        self.llm_hist.record_secs(r.latency);
                        (r.text, t + r.latency)
                    }
                    Err(e) => {
                        log::warn!("empathy reply failed: {e}");
                        return;
                    }
                }
            }
        };
        match self.tts.synthesize(&speech, &VoiceParams::of(&persona), "reaction") {
            Ok(o) => {
                self.tts_hist.record_secs(o.latency);
                ready += o.latency;
                self.measure(&o.pcm);
                self.speech.urgent.push_back(Utterance {
                    source: SpeechSource::Reaction { category },
                    text: speech,
                    duration: o.pcm.duration(),
                    ready_at: ready,
                });
            }
            Err(e) => log::warn!("reaction speech failed: {e}"),
        }
    }

    fn step_song(&mut self, t: f64, out: &mut Vec<EngineEvent>) {
        let wall = self.wall();
        let Some(run) = self.song.as_mut() else { return };
        let events = run.step(t, &self.personas, self.llm.as_mut(), self.tts.as_mut(), wall);
        if run.inflight_count() > 1 {
            self.invariants.multiple_inflight += 1;
        }
        let song = run.context().song_name.clone();
        let mut audio = Vec::new();
        for ev in events {
            match ev {
                StepEvent::State { segment, state, t: at } => {
                    match state {
                        SegmentState::Inflight => {
                            if let Some(r) = run.records().iter().rev().find(|r| r.segment == segment) {
                                self.jitter.record_secs((r.actual_trigger - r.intended_trigger).abs());
                                if let Some(l) = r.llm_latency {
                                    self.llm_hist.record_secs(l);
                                }
                                if let Some(l) = r.tts_latency {
                                    self.tts_hist.record_secs(l);
                                }
                            }
                        }
                        SegmentState::Spoken => self.segment_stats.record(segment.as_str(), true),
                        SegmentState::Skipped => self.segment_stats.record(segment.as_str(), false),
                        SegmentState::Pending => {}
                    }
                    out.push(EngineEvent::Segment {
                        song: song.clone(),
                        segment,
                        state,
                        t: at,
                    });
                }
                StepEvent::Speech {
                    segment,
                    text,
                    audio: pcm,
                    t: at,
                } => {
                    let deadline = run.plans().iter().find(|p| p.segment == segment).map(|p| p.deadline);
                    if deadline.is_some_and(|d| at > d) {
                        self.invariants.late_speech += 1;
                    }
                    audio.push(pcm.clone());
                    self.speech.scheduled.push_back(Utterance {
                        source: SpeechSource::Segment { segment },
                        text,
                        duration: pcm.duration(),
                        ready_at: at,
                    });
                }
            }
        }
        for pcm in audio {
            self.measure(&pcm);
        }
    }

    fn step_speech(&mut self, t: f64, out: &mut Vec<EngineEvent>) {
        if let Some((_, end)) = &self.speech.playing {
            if *end <= t {
                let end = *end;
                self.speech.playing = None;
                if let Err(e) = self.ducker.tts_stop(end) {
                    log::warn!("ducking: {e}");
                }
            }
        }
        if self.speech.playing.is_none() {
            if let Some(u) = self.speech.pop_ready(t) {
                let end = t + u.duration;
                if let Err(e) = self.ducker.tts_start(t) {
                    log::warn!("ducking: {e}");
                }
                out.push(EngineEvent::Speech {
                    source: u.source.clone(),
                    text: u.text.clone(),
                    start: t,
                    end,
                });
                self.speech.playing = Some((u, end));
            }
        }
    }

    fn measure(&mut self, pcm: &PcmBuffer) {
        if !self.cfg.measure_loudness {
            return;
        }
        let boosted = match apply_gain(pcm, self.cfg.gain.boost_multiplier) {
            Ok(b) => enforce_true_peak_ceiling(&b, -1.0),
            Err(_) => return,
        };
        if let Ok(r) = integrated_loudness(&boosted) {
            self.loudness.record(r.integrated_lufs, r.true_peak_dbtp);
        }
    }

    pub fn footprint(&self) -> Footprint {
        Footprint {
            active_danmaku: self.lanes.active().len(),
            wait_queue: self.lanes.wait_queue_len(),
            bus_pending: self.bus.pending_len(),
            dedup_entries: self.bus.dedup_entries(),
            duplicate_checker_keys: self.duplicates.tracked_keys(),
            fx_history: self.fx.len(),
            speech_queue: self.speech.len(),
            histogram_bins: self.latency.values().map(|h| h.distinct_values()).sum::<usize>()
                + self.jitter.distinct_values()
                + self.llm_hist.distinct_values()
                + self.tts_hist.distinct_values(),
            song_queue: self.songs.len(),
        }
    }

    pub fn jitter_summary(&self) -> JitterSummary {
        if self.jitter.count() == 0 {
            return JitterSummary::default();
        }
        let q = |p| self.jitter.percentile_ms(p).expect("non-empty");
        JitterSummary {
            count: self.jitter.count() as usize,
            median_ms: q(50.0),
            p25_ms: q(25.0),
            p75_ms: q(75.0),
            max_ms: q(100.0),
        }
    }

    pub fn report(&self, wall: WallClockInfo) -> RunReport {
        let stats = self.lanes.stats();
        let bus = self.bus.stats();
        let mut segments = self.segment_stats.clone();
        segments.llm_latency = self.llm_hist.summary();
        segments.tts_latency = self.tts_hist.summary();
        RunReport {
            version: REPORT_VERSION,
            percentile_method: PERCENTILE_METHOD.to_string(),
            config: RunConfigEcho {
                seed: self.profile.as_ref().map_or(self.cfg.seed, |p| p.seed),
                profile: self.profile.clone(),
                scheduler: self.cfg.scheduler.clone(),
                dedup: self.cfg.dedup.clone(),
                fps: self.cfg.fps,
            },
            simulated_secs: self.now,
            frames: self.frames,
            overlapping_frames: self.invariants.overlapping_frames,
            overlap_rate: if self.frames == 0 {
                0.0
            } else {
                self.invariants.overlapping_frames as f64 / self.frames as f64
            },
            duplicate_rate: self.duplicates.duplicate_rate(),
            offered: stats.offered,
            emitted: stats.emitted,
            drop_count: stats.dropped,
            dedup_rejected: bus.rejected_duplicate,
            latency_by_kind: self
                .latency
                .iter()
                .map(|(k, h)| (k.as_str().to_string(), h.summary()))
                .collect(),
            jitter: self.jitter_summary(),
            segments,
            reactions: self.reactions.counters().clone(),
            loudness: self.loudness,
            wall,
        }
    }
}
