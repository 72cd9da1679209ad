use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LatencyModel, PersonaConfig};
use crate::audio::PcmBuffer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TtsError {
    #[error("TTS synthesis failed: {0}")]
    Synthesis(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub voice_type: String,
    pub speed_ratio: f64,
    pub pitch_ratio: f64,
}

impl VoiceParams {
    pub fn of(p: &PersonaConfig) -> Self {
        Self {
            voice_type: p.voice_type.clone(),
            speed_ratio: p.speed_ratio,
            pitch_ratio: p.pitch_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtsOutput {
    pub pcm: PcmBuffer,
    /// Seconds until audio is available.
    pub latency: f64,
}

pub trait TtsClient: Send {
    fn synthesize(&mut self, text: &str, voice: &VoiceParams, label: &str) -> Result<TtsOutput, TtsError>;
}

/// Seconds of audio per character before the speed ratio is applied.
pub const SECS_PER_CHAR: f64 = 0.18;
const BASE_TONE_HZ: f64 = 220.0;
const VOICE_HISTORY: usize = 256;

/// Offline TTS: a sine tone whose duration is `chars * 0.18 / speed` and
/// whose pitch scales with the voice's pitch ratio. Remembers every voice it
/// was asked to use (most recent 128 to 256).
#[derive(Debug, Clone)]
pub struct MockTts {
    rng: ChaCha8Rng,
    latency: LatencyModel,
    sample_rate: u32,
    synthesize_audio: bool,
    voices: Vec<VoiceParams>,
}

impl MockTts {
    pub fn new(seed: u64, latency: LatencyModel) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            latency,
            sample_rate: 48_000,
            synthesize_audio: true,
            voices: Vec::new(),
        }
    }

    /// Skips sample generation and returns silence of the right length.
    /// Long simulations use this to stay cheap.
    pub fn silent(mut self) -> Self {
        self.synthesize_audio = false;
        self
    }

    pub fn voices_used(&self) -> &[VoiceParams] {
        &self.voices
    }

    pub fn clear_history(&mut self) {
        self.voices.clear();
    }
}

impl TtsClient for MockTts {
    fn synthesize(&mut self, text: &str, voice: &VoiceParams, label: &str) -> Result<TtsOutput, TtsError> {
        if text.trim().is_empty() {
            return Err(TtsError::Synthesis("empty text".into()));
        }
        if self.voices.len() == VOICE_HISTORY {
            self.voices.drain(..VOICE_HISTORY / 2);
        }
        self.voices.push(voice.clone());
        let secs = text.chars().count() as f64 * SECS_PER_CHAR / voice.speed_ratio.max(1e-3);
        let frames = (secs * f64::from(self.sample_rate)).round() as usize;
        let samples = if self.synthesize_audio {
            let w = 2.0 * PI * BASE_TONE_HZ * voice.pitch_ratio / f64::from(self.sample_rate);
            (0..frames).map(|i| (8000.0 * (w * i as f64).sin()) as i16).collect()
        } else {
            vec![0; frames]
        };
        let pcm = PcmBuffer::new(samples, 1, self.sample_rate).map_err(|e| TtsError::Synthesis(e.to_string()))?;
        Ok(TtsOutput {
            pcm,
            latency: self.latency.sample(label, &mut self.rng),
        })
    }
}
