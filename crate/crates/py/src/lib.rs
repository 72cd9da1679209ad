//! Python module `livecast`.
//!
//! Structured results are returned as plain dicts or as JSON text in the
//! same schemas the CLIs and the gateway emit, so Python callers can reuse
//! one parser for all three.

use std::fmt::Display;

use livecast_core::audio::{self, PcmBuffer};
use livecast_core::engine::{Engine, EngineConfig, SessionState, SongSpec, StartRequest};
use livecast_core::event::{EventKind, LiveEvent};
use livecast_core::loadgen::{self, LoadProfile};
use livecast_core::metrics::{self, WallClockInfo};
use livecast_core::persona::{bundled_persona as bundled, load_persona, PersonaConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn event_dict<'py>(py: Python<'py>, e: &LiveEvent) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", e.kind.as_str())?;
    d.set_item("timestamp", e.timestamp)?;
    d.set_item("user", &e.user)?;
    d.set_item("content", &e.content)?;
    d.set_item("count", e.count)?;
    Ok(d)
}

/// Seeded synthetic workload as a list of event dicts sorted by timestamp.
#[pyfunction]
#[pyo3(signature = (duration=3600.0, rate=12.0, gift_peak=50, storm_period=600, storm_probability=0.15, seed=42))]
fn generate_workload<'py>(
    py: Python<'py>,
    duration: f64,
    rate: f64,
    gift_peak: u32,
    storm_period: u32,
    storm_probability: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyList>> {
    let profile = LoadProfile {
        duration,
        dmk_rate: rate,
        gift_peak,
        storm_period,
        storm_probability,
        seed,
    };
    let events = loadgen::generate_workload(&profile).map_err(value_err)?;
    let dicts = events.iter().map(|e| event_dict(py, e)).collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, dicts)
}

/// Gated integrated loudness and true peak of interleaved 16-bit samples.
/// Values below the gate or of digital silence come back as `None`.
#[pyfunction]
fn loudness<'py>(py: Python<'py>, samples: Vec<i16>, channels: u16, sample_rate: u32) -> PyResult<Bound<'py, PyDict>> {
    let buf = PcmBuffer::new(samples, channels, sample_rate).map_err(value_err)?;
    let r = audio::integrated_loudness(&buf).map_err(value_err)?;
    let finite = |x: f64| x.is_finite().then_some(x);
    let d = PyDict::new(py);
    d.set_item("integrated_lufs", finite(r.integrated_lufs))?;
    d.set_item("true_peak_dbtp", finite(r.true_peak_dbtp))?;
    d.set_item("gated_block_count", r.gated_block_count)?;
    d.set_item("below_gate", r.below_gate)?;
    Ok(d)
}

/// Scales little-endian 16-bit PCM bytes, truncating toward zero and
/// clamping to the sample range.
#[pyfunction]
fn apply_gain<'py>(py: Python<'py>, data: &[u8], multiplier: f64) -> PyResult<Bound<'py, PyBytes>> {
    let buf = PcmBuffer::from_le_bytes(data, 1, 48_000).map_err(value_err)?;
    let out = audio::apply_gain(&buf, multiplier).map_err(value_err)?;
    Ok(PyBytes::new(py, &out.to_le_bytes()))
}

/// Nearest-rank percentile, `p` in [0, 100].
#[pyfunction]
fn percentile(samples: Vec<f64>, p: f64) -> PyResult<f64> {
    metrics::percentile(&samples, p).map_err(value_err)
}

/// A bundled persona as JSON text.
#[pyfunction]
fn bundled_persona(name: &str) -> PyResult<String> {
    bundled(name).map(|p| p.to_json()).map_err(value_err)
}

/// Simulated session on the seeded mock LLM and TTS. The clock only moves
/// when `advance_to` or `run_until_quiet` is called.
#[pyclass(unsendable)]
struct Session {
    engine: Engine,
}

fn persona_arg(spec: &str) -> PyResult<PersonaConfig> {
    if spec.trim_start().starts_with('{') {
        load_persona(spec).map_err(value_err)
    } else {
        bundled(spec).map_err(value_err)
    }
}

fn events_json(events: Vec<livecast_core::engine::EngineEvent>) -> PyResult<Vec<String>> {
    events
        .iter()
        .map(|e| serde_json::to_string(e).map_err(|err| PyRuntimeError::new_err(err.to_string())))
        .collect()
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (persona="suwanli", seed=42))]
    fn new(persona: &str, seed: u64) -> PyResult<Self> {
        let cfg = EngineConfig {
            seed,
            ..EngineConfig::default()
        };
        let engine = Engine::simulated(cfg, persona_arg(persona)?).map_err(value_err)?;
        Ok(Self { engine })
    }

    /// `profile` is a preset name (`testcase1`, `baseline`) or `None` for
    /// injected traffic only; `playlist` is a list of `(name, seconds)`.
    #[pyo3(signature = (profile=None, playlist=Vec::new(), seed=None))]
    fn start(
        &mut self,
        profile: Option<&str>,
        playlist: Vec<(String, f64)>,
        seed: Option<u64>,
    ) -> PyResult<Vec<String>> {
        let profile = match profile {
            Some(name) => {
                let mut p = LoadProfile::preset(name).ok_or_else(|| value_err(format!("unknown profile {name:?}")))?;
                if let Some(s) = seed {
                    p.seed = s;
                }
                Some(p)
            }
            None => None,
        };
        let playlist = playlist.into_iter().map(|(n, d)| SongSpec::new(n, d)).collect();
        let events = self
            .engine
            .start(StartRequest { profile, playlist })
            .map_err(value_err)?;
        events_json(events)
    }

    fn stop(&mut self) -> PyResult<Vec<String>> {
        events_json(self.engine.stop().map_err(value_err)?)
    }

    /// Publishes one event stamped at the current clock unless `timestamp`
    /// is given; returns whether the duplicate filter kept it.
    #[pyo3(signature = (kind, content, user="", timestamp=None))]
    fn inject(&mut self, kind: &str, content: &str, user: &str, timestamp: Option<f64>) -> PyResult<bool> {
        let kind = EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == kind)
            .ok_or_else(|| value_err(format!("unknown event kind {kind:?}")))?;
        let t = timestamp.unwrap_or(self.engine.now());
        self.engine
            .inject(LiveEvent::new(kind, t, user, content))
            .map_err(value_err)
    }

    fn urgent(&mut self, text: &str) -> PyResult<()> {
        self.engine.insert_urgent(text).map_err(value_err)
    }

    /// Bundled persona name or persona JSON text.
    fn swap_persona(&mut self, persona: &str) -> PyResult<String> {
        let ev = self.engine.swap_persona(persona_arg(persona)?).map_err(value_err)?;
        serde_json::to_string(&ev).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Steps whole frames up to `t`; returns the engine events as JSON text.
    fn advance_to(&mut self, t: f64) -> PyResult<Vec<String>> {
        events_json(self.engine.advance_to(t))
    }

    fn run_until_quiet(&mut self, max_t: f64) {
        self.engine.run_until_quiet(max_t);
    }

    /// Run report JSON with the wall-clock fields left empty.
    fn report(&self) -> String {
        self.engine.report(WallClockInfo::default()).to_json()
    }

    #[getter]
    fn now(&self) -> f64 {
        self.engine.now()
    }

    #[getter]
    fn state(&self) -> &'static str {
        match self.engine.state() {
            SessionState::Idle => "idle",
            SessionState::Running => "running",
            SessionState::Stopped => "stopped",
        }
    }

    #[getter]
    fn persona(&self) -> String {
        self.engine.personas().current().persona_name.clone()
    }
}

#[pymodule]
pub fn livecast(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_workload, m)?)?;
    m.add_function(wrap_pyfunction!(loudness, m)?)?;
    m.add_function(wrap_pyfunction!(apply_gain, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_persona, m)?)?;
    m.add_class::<Session>()?;
    Ok(())
}
