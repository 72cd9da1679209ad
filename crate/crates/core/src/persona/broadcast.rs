use std::sync::Arc;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{
    plan_segments, render_template, LlmClient, LlmRequest, PersonaConfig, PersonaError, PersonaStore, Segment,
    SegmentConfig, SegmentPlan, SegmentState, SongContext, TtsClient, VoiceParams,
};
use crate::audio::PcmBuffer;

/// Result of running one segment through LLM and TTS.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub segment: Segment,
    /// `Spoken` or `Skipped`.
    pub state: SegmentState,
    pub prompt: String,
    pub text: Option<String>,
    pub audio: Option<PcmBuffer>,
    pub llm_latency: Option<f64>,
    pub tts_latency: Option<f64>,
    /// Session time the speech is ready (Spoken) or the segment was given
    /// up (Skipped).
    pub resolved_at: f64,
    pub error: Option<String>,
}

fn user_prompt(plan: &SegmentPlan, persona: &PersonaConfig, ctx: &SongContext, wall: NaiveDateTime) -> String {
    let body = render_template(plan.segment.template(persona), ctx, persona, wall);
    format!("{body}\n（请控制在约{}字以内）", plan.target_chars)
}

/// Runs `plan` at session time `now`. Templates and the system prompt come
/// from `persona`; the voice is passed separately so callers can read it
/// fresh at call time. Speech that cannot be ready by the deadline is
/// skipped, never delivered late.
#[allow(clippy::too_many_arguments)]
pub fn run_segment(
    plan: &mut SegmentPlan,
    persona: &PersonaConfig,
    voice: &VoiceParams,
    ctx: &SongContext,
    llm: &mut dyn LlmClient,
    tts: &mut dyn TtsClient,
    now: f64,
    wall: NaiveDateTime,
) -> Result<SegmentOutcome, PersonaError> {
    if plan.state != SegmentState::Pending {
        return Err(PersonaError::NotPending(plan.segment));
    }
    if now < plan.trigger_time {
        return Err(PersonaError::NotDue {
            segment: plan.segment,
            trigger: plan.trigger_time,
            now,
        });
    }
    let prompt = user_prompt(plan, persona, ctx, wall);
    let mut outcome = SegmentOutcome {
        segment: plan.segment,
        state: SegmentState::Skipped,
        prompt,
        text: None,
        audio: None,
        llm_latency: None,
        tts_latency: None,
        resolved_at: now,
        error: None,
    };
    let skip = |plan: &mut SegmentPlan, mut o: SegmentOutcome, err: String| {
        plan.state = SegmentState::Skipped;
        o.error = Some(err);
        o
    };

    let req = LlmRequest {
        system_prompt: persona.system_prompt.clone(),
        user_prompt: outcome.prompt.clone(),
        max_output_tokens: plan.output_token_budget,
        label: plan.segment.as_str().to_string(),
    };
    let reply = match llm.complete(&req) {
        Ok(r) => r,
        Err(e) => return Ok(skip(plan, outcome, e.to_string())),
    };
    outcome.llm_latency = Some(reply.latency);
    let speech = match tts.synthesize(&reply.text, voice, plan.segment.as_str()) {
        Ok(s) => s,
        Err(e) => return Ok(skip(plan, outcome, e.to_string())),
    };
    outcome.tts_latency = Some(speech.latency);

    let ready = now + reply.latency + speech.latency;
    if ready > plan.deadline {
        outcome.resolved_at = plan.deadline;
        let msg = format!("ready at {ready:.3} s, deadline {:.3} s", plan.deadline);
        return Ok(skip(plan, outcome, msg));
    }
    plan.state = SegmentState::Spoken;
    outcome.state = SegmentState::Spoken;
    outcome.resolved_at = ready;
    outcome.text = Some(reply.text);
    outcome.audio = Some(speech.pcm);
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub song: String,
    pub persona: String,
    pub segment: Segment,
    pub state: SegmentState,
    pub intended_trigger: f64,
    pub actual_trigger: f64,
    pub deadline: f64,
    pub resolved_at: f64,
    pub llm_latency: Option<f64>,
    pub tts_latency: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    State {
        segment: Segment,
        state: SegmentState,
        t: f64,
    },
    Speech {
        segment: Segment,
        text: String,
        audio: PcmBuffer,
        t: f64,
    },
}

#[derive(Debug)]
struct Inflight {
    idx: usize,
    outcome: SegmentOutcome,
}

/// One song's segment timeline, stepped by the session clock. The persona is
/// snapshotted at song start, so a swap mid-song only changes templates from
/// the next song on; voice is looked up live for each TTS call.
#[derive(Debug)]
pub struct SongRun {
    ctx: SongContext,
    persona: Arc<PersonaConfig>,
    plans: Vec<SegmentPlan>,
    inflight: Option<Inflight>,
    records: Vec<SegmentRecord>,
}

impl SongRun {
    pub fn start(ctx: SongContext, store: &PersonaStore, cfg: &SegmentConfig) -> Result<Self, PersonaError> {
        let plans = plan_segments(&ctx, cfg)?;
        Ok(Self {
            ctx,
            persona: store.current(),
            plans,
            inflight: None,
            records: Vec::new(),
        })
    }

    pub fn context(&self) -> &SongContext {
        &self.ctx
    }

    pub fn persona(&self) -> &Arc<PersonaConfig> {
        &self.persona
    }

    pub fn plans(&self) -> &[SegmentPlan] {
        &self.plans
    }

    pub fn records(&self) -> &[SegmentRecord] {
        &self.records
    }

    pub fn inflight_count(&self) -> usize {
        self.plans.iter().filter(|p| p.state == SegmentState::Inflight).count()
    }

    pub fn is_complete(&self) -> bool {
        self.plans
            .iter()
            .all(|p| matches!(p.state, SegmentState::Spoken | SegmentState::Skipped))
    }

    /// Earliest session time at which `step` has work to do.
    pub fn next_wakeup(&self) -> Option<f64> {
        if let Some(f) = &self.inflight {
            return Some(f.outcome.resolved_at);
        }
        self.plans
            .iter()
            .find(|p| p.state == SegmentState::Pending)
            .map(|p| p.trigger_time)
    }

    /// Resolves a finished segment, then triggers the next due one.
    pub fn step(
        &mut self,
        now: f64,
        store: &PersonaStore,
        llm: &mut dyn LlmClient,
        tts: &mut dyn TtsClient,
        wall: NaiveDateTime,
    ) -> Vec<StepEvent> {
        let mut events = Vec::new();
        loop {
            if let Some(f) = &self.inflight {
                if f.outcome.resolved_at > now {
                    break;
                }
                let f = self.inflight.take().expect("checked");
                self.resolve(f, now, &mut events);
                continue;
            }
            let Some(idx) = self.plans.iter().position(|p| p.state == SegmentState::Pending) else {
                break;
            };
            if self.plans[idx].trigger_time > now {
                break;
            }
            self.trigger(idx, now, store, llm, tts, wall, &mut events);
        }
        events
    }

    #[allow(clippy::too_many_arguments)]
    fn trigger(
        &mut self,
        idx: usize,
        now: f64,
        store: &PersonaStore,
        llm: &mut dyn LlmClient,
        tts: &mut dyn TtsClient,
        wall: NaiveDateTime,
        events: &mut Vec<StepEvent>,
    ) {
        let voice = VoiceParams::of(&store.current());
        let plan = &mut self.plans[idx];
        let intended = plan.trigger_time;
        let outcome =
            run_segment(plan, &self.persona, &voice, &self.ctx, llm, tts, now, wall).expect("plan is pending and due");
        // the plan's terminal state is published when the outcome resolves
        plan.state = SegmentState::Inflight;
        events.push(StepEvent::State {
            segment: plan.segment,
            state: SegmentState::Inflight,
            t: now,
        });
        self.records.push(SegmentRecord {
            song: self.ctx.song_name.clone(),
            persona: self.persona.persona_name.clone(),
            segment: plan.segment,
            state: SegmentState::Inflight,
            intended_trigger: intended,
            actual_trigger: now,
            deadline: plan.deadline,
            resolved_at: outcome.resolved_at,
            llm_latency: outcome.llm_latency,
            tts_latency: outcome.tts_latency,
            error: outcome.error.clone(),
        });
        self.inflight = Some(Inflight { idx, outcome });
    }

    fn resolve(&mut self, f: Inflight, now: f64, events: &mut Vec<StepEvent>) {
        let plan = &mut self.plans[f.idx];
        plan.state = f.outcome.state;
        if let Some(r) = self.records.iter_mut().rev().find(|r| r.segment == plan.segment) {
            r.state = f.outcome.state;
        }
        let t = f.outcome.resolved_at.min(now);
        if let (SegmentState::Spoken, Some(text), Some(audio)) = (f.outcome.state, f.outcome.text, f.outcome.audio) {
            events.push(StepEvent::Speech {
                segment: plan.segment,
                text,
                audio,
                t,
            });
        }
        events.push(StepEvent::State {
            segment: plan.segment,
            state: f.outcome.state,
            t,
        });
    }
}
