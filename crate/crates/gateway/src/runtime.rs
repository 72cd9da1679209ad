//! The engine thread.
//!
//! The [`Engine`] never leaves the thread that created it. Handlers send
//! [`Command`]s over a channel and await a one-shot reply; the thread applies
//! commands between frames and publishes everything the engine reports, in
//! order, to a bounded broadcast channel. A reply is sent only after the
//! frames it caused are published, so a client that sees the reply and then
//! reads the stream never observes an effect before its cause.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use livecast_core::engine::{Engine, EngineConfig, EngineError, EngineEvent, SessionState, StartRequest};
use livecast_core::metrics::{RunReport, WallClockInfo};
use livecast_core::persona::{bundled_persona, load_persona, PersonaConfig};
use serde_json::Value;
use tokio::sync::{broadcast, oneshot};

use crate::error::GatewayError;
use crate::protocol::{heartbeat, stamp, ClockMode, CurrentSong, SessionHandle, StartSession, SwapRequest, MAX_SPEED};

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub engine: EngineConfig,
    pub persona: PersonaConfig,
    /// Frames each subscriber may fall behind before the oldest are dropped.
    pub stream_capacity: usize,
    pub heartbeat: Duration,
    /// Longest wait for a command before the clock is advanced again.
    pub tick: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            persona: bundled_persona("shiguang").expect("bundled persona"),
            stream_capacity: 1024,
            heartbeat: Duration::from_secs(1),
            tick: Duration::from_millis(5),
        }
    }
}

type Reply<T> = oneshot::Sender<Result<T, GatewayError>>;

pub enum Command {
    Start(StartSession, Reply<SessionHandle>),
    Stop(Reply<SessionHandle>),
    Inject(Value, Reply<bool>),
    Swap(SwapRequest, Reply<SessionHandle>),
    Urgent(String, Reply<()>),
    Report(Reply<RunReport>),
    Status(Reply<SessionHandle>),
    /// Publish a heartbeat now, e.g. for a freshly connected subscriber.
    Heartbeat,
}

struct Session {
    id: u64,
    clock: ClockMode,
    speed: f64,
    wall_start: Instant,
    t0: f64,
}

struct Worker {
    cfg: GatewayConfig,
    engine: Engine,
    session: Option<Session>,
    sessions_started: u64,
    seq: u64,
    stream: broadcast::Sender<Arc<str>>,
    control_max: Duration,
}

impl Worker {
    fn publish(&mut self, body: Value) {
        self.seq += 1;
        // no subscribers is not an error
        let _ = self.stream.send(Arc::from(stamp(body, self.seq)));
    }

    fn publish_events(&mut self, events: Vec<EngineEvent>) {
        for ev in events {
            match serde_json::to_value(&ev) {
                Ok(v) => self.publish(v),
                Err(e) => log::error!("unserialisable engine event: {e}"),
            }
        }
    }

    fn handle(&self) -> SessionHandle {
        let (session_id, clock, speed) = match &self.session {
            Some(s) => (format!("s{}", s.id), s.clock, s.speed),
            None => (String::new(), ClockMode::Realtime, 1.0),
        };
        SessionHandle {
            session_id,
            state: self.engine.state(),
            persona: self.engine.personas().current().persona_name.clone(),
            current_song: self.engine.current_song().map(|run| {
                let c = run.context();
                CurrentSong {
                    name: c.song_name.clone(),
                    start: c.start_time,
                    duration: c.duration,
                    first: c.is_first_song,
                }
            }),
            clock,
            speed,
            t: self.engine.now(),
            control_max_ms: self.control_max.as_secs_f64() * 1000.0,
        }
    }

    /// Session time the clock should have reached by now.
    fn target_time(&self) -> Option<f64> {
        let s = self.session.as_ref()?;
        (self.engine.state() == SessionState::Running).then(|| s.t0 + s.wall_start.elapsed().as_secs_f64() * s.speed)
    }

    fn advance(&mut self) {
        if let Some(t) = self.target_time() {
            let events = self.engine.advance_to(t);
            self.publish_events(events);
        }
    }

    fn start(&mut self, req: StartSession) -> Result<SessionHandle, GatewayError> {
        if self.engine.state() == SessionState::Running {
            return Err(EngineError::AlreadyRunning.into());
        }
        let speed = match req.clock {
            ClockMode::Realtime => 1.0,
            ClockMode::Simulated => req.speed,
        };
        if !(speed > 0.0 && speed <= MAX_SPEED) {
            return Err(GatewayError::BadRequest(format!("speed must be in (0, {MAX_SPEED}]")));
        }
        let profile = match &req.profile {
            Some(spec) => Some(
                spec.resolve()
                    .ok_or_else(|| GatewayError::BadRequest(format!("unknown profile preset {spec:?}")))?,
            ),
            None => None,
        };
        if self.engine.state() == SessionState::Stopped {
            // fresh metrics per session; the persona carries over
            let persona = (*self.engine.personas().current()).clone();
            self.engine = Engine::simulated(self.cfg.engine.clone(), persona)?;
        }
        let events = self.engine.start(StartRequest {
            profile,
            playlist: req.playlist,
        })?;
        self.sessions_started += 1;
        self.session = Some(Session {
            id: self.sessions_started,
            clock: req.clock,
            speed,
            wall_start: Instant::now(),
            t0: self.engine.now(),
        });
        self.publish_events(events);
        Ok(self.handle())
    }

    fn inject(&mut self, v: Value) -> Result<bool, GatewayError> {
        let Value::Object(mut m) = v else {
            return Err(GatewayError::BadRequest("event must be a JSON object".into()));
        };
        if self.engine.state() != SessionState::Running {
            return Err(EngineError::NotRunning.into());
        }
        m.entry("timestamp").or_insert_with(|| self.engine.now().into());
        let event = livecast_core::event::LiveEvent::from_json(&Value::Object(m).to_string())
            .map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        Ok(self.engine.inject(event)?)
    }

    fn swap(&mut self, req: SwapRequest) -> Result<SessionHandle, GatewayError> {
        let persona = match req {
            SwapRequest::Bundled(name) => bundled_persona(&name),
            SwapRequest::Document(json) => load_persona(&json),
        }
        .map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        let ev = self.engine.swap_persona(persona)?;
        self.publish_events(vec![ev]);
        Ok(self.handle())
    }

    fn report(&self) -> RunReport {
        self.engine.report(WallClockInfo {
            elapsed_secs: self
                .session
                .as_ref()
                .map_or(0.0, |s| s.wall_start.elapsed().as_secs_f64()),
            generated_at: chrono::Local::now().to_rfc3339(),
        })
    }

    fn apply(&mut self, cmd: Command) {
        let started = Instant::now();
        let counted = !matches!(cmd, Command::Start(..));
        match cmd {
            Command::Start(req, tx) => {
                let _ = tx.send(self.start(req));
            }
            Command::Stop(tx) => {
                let r = self.engine.stop().map_err(GatewayError::from).map(|events| {
                    self.publish_events(events);
                    self.handle()
                });
                let _ = tx.send(r);
            }
            Command::Inject(v, tx) => {
                let _ = tx.send(self.inject(v));
            }
            Command::Swap(req, tx) => {
                let _ = tx.send(self.swap(req));
            }
            Command::Urgent(text, tx) => {
                let _ = tx.send(self.engine.insert_urgent(&text).map_err(GatewayError::from));
            }
            Command::Report(tx) => {
                let _ = tx.send(Ok(self.report()));
            }
            Command::Status(tx) => {
                let _ = tx.send(Ok(self.handle()));
            }
            Command::Heartbeat => {
                let hb = heartbeat(&self.handle());
                self.publish(hb);
            }
        }
        if counted {
            self.control_max = self.control_max.max(started.elapsed());
        }
    }

    fn run(mut self, rx: mpsc::Receiver<Command>) {
        let mut last_beat: Option<Instant> = None;
        loop {
            match rx.recv_timeout(self.cfg.tick) {
                Ok(cmd) => {
                    // bring the clock up to date so stamps and replies see current state
                    self.advance();
                    self.apply(cmd);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return,
            }
            self.advance();
            if last_beat.is_none_or(|b| b.elapsed() >= self.cfg.heartbeat) {
                last_beat = Some(Instant::now());
                let hb = heartbeat(&self.handle());
                self.publish(hb);
            }
        }
    }
}

/// Owner of the engine thread. Dropping every clone of the command sender
/// ends the thread.
pub struct EngineHandle {
    commands: mpsc::Sender<Command>,
    stream: broadcast::Sender<Arc<str>>,
    thread: Option<JoinHandle<()>>,
}

impl EngineHandle {
    pub fn spawn(cfg: GatewayConfig) -> Result<Self, GatewayError> {
        let engine = Engine::simulated(cfg.engine.clone(), cfg.persona.clone())?;
        let (stream, _) = broadcast::channel(cfg.stream_capacity.max(1));
        let (commands, rx) = mpsc::channel();
        let worker = Worker {
            cfg,
            engine,
            session: None,
            sessions_started: 0,
            seq: 0,
            stream: stream.clone(),
            control_max: Duration::ZERO,
        };
        let thread = std::thread::Builder::new()
            .name("livecast-engine".into())
            .spawn(move || worker.run(rx))
            .map_err(|e| GatewayError::Internal(e.to_string()))?;
        Ok(Self {
            commands,
            stream,
            thread: Some(thread),
        })
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.stream.subscribe()
    }

    pub fn send(&self, cmd: Command) -> Result<(), GatewayError> {
        self.commands.send(cmd).map_err(|_| GatewayError::EngineGone)
    }

    /// Sends a command built around a fresh reply channel and awaits it.
    pub async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, GatewayError> {
        let (tx, rx) = oneshot::channel();
        self.send(make(tx))?;
        rx.await.map_err(|_| GatewayError::EngineGone)?
    }
}

impl Drop for EngineHandle {
    fn drop(&mut self) {
        // replace the sender so the worker sees a disconnect
        let (dead, _) = mpsc::channel();
        drop(std::mem::replace(&mut self.commands, dead));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
