//! Audio lifecycle and numerics.

mod bin;
mod ducking;
mod loudness;
mod pcm;

pub use bin::{
    in_callback_context, BinStats, BufferHandle, BufferReleaser, BufferState, CleanupWorker, GarbageBin,
    SimulatedDevice,
};
pub use ducking::{duck_gain_factor, DuckEvent, Ducker, DuckingConfig};
pub use loudness::{
    enforce_true_peak_ceiling, integrated_loudness, true_peak, LoudnessReport, ABSOLUTE_GATE_LKFS, RELATIVE_GATE_LU,
};
pub use pcm::{apply_gain, apply_gain_in_place, GainConfig, PcmBuffer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample count {len} is not divisible by channel count {channels}")]
    Misaligned { len: usize, channels: u16 },
    #[error("unsupported channel count {0} (expected 1 or 2)")]
    Channels(u16),
    #[error("unsupported sample rate {0}")]
    SampleRate(u32),
    #[error("gain multiplier must be positive and finite, got {0}")]
    BadMultiplier(f64),
    #[error("attenuation must be >= 0 dB, got {0}")]
    BadAttenuation(f64),
    #[error("TTS stop at {0} s without a matching start")]
    UnmatchedStop(f64),
    #[error("ducking events must be time-ordered ({at} s after {last} s)")]
    OutOfOrder { at: f64, last: f64 },
    #[error("buffer pool exhausted ({0} slots)")]
    PoolExhausted(usize),
    #[error("handle {0:?} is not in the {1:?} state")]
    WrongState(BufferHandle, BufferState),
    #[error("unsupported WAV format: {0}")]
    WavFormat(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}
