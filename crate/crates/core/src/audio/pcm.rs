use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AudioError;

/// Interleaved 16-bit PCM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcmBuffer {
    pub samples: Vec<i16>,
    pub channels: u16,
    pub sample_rate: u32,
}

impl PcmBuffer {
    pub fn new(samples: Vec<i16>, channels: u16, sample_rate: u32) -> Result<Self, AudioError> {
        if !(1..=2).contains(&channels) {
            return Err(AudioError::Channels(channels));
        }
        if !samples.len().is_multiple_of(channels as usize) {
            return Err(AudioError::Misaligned {
                len: samples.len(),
                channels,
            });
        }
        if sample_rate == 0 {
            return Err(AudioError::SampleRate(sample_rate));
        }
        Ok(Self {
            samples,
            channels,
            sample_rate,
        })
    }

    pub fn silence(frames: usize, channels: u16, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(vec![0; frames * channels as usize], channels, sample_rate)
    }

    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = i16> + '_ {
        self.samples.iter().skip(c).step_by(self.channels as usize).copied()
    }

    pub fn from_le_bytes(bytes: &[u8], channels: u16, sample_rate: u32) -> Result<Self, AudioError> {
        let samples = bytes
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        Self::new(samples, channels, sample_rate)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self, AudioError> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(AudioError::WavFormat(format!(
                "{}-bit {:?}; only 16-bit integer PCM is supported",
                spec.bits_per_sample, spec.sample_format
            )));
        }
        let samples = reader.samples::<i16>().collect::<Result<Vec<_>, _>>()?;
        Self::new(samples, spec.channels, spec.sample_rate)
    }

    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<(), AudioError> {
        let spec = hound::WavSpec {
            channels: self.channels,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            writer.write_sample(s)?;
        }
        writer.finalize()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainConfig {
    pub boost_multiplier: f64,
    pub duck_attenuation_db: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            boost_multiplier: 2.0,
            duck_attenuation_db: 12.0,
        }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<(), AudioError> {
        if !(self.boost_multiplier.is_finite() && self.boost_multiplier > 0.0) {
            return Err(AudioError::BadMultiplier(self.boost_multiplier));
        }
        if !(self.duck_attenuation_db.is_finite() && self.duck_attenuation_db >= 0.0) {
            return Err(AudioError::BadAttenuation(self.duck_attenuation_db));
        }
        Ok(())
    }
}

/// `s -> clamp(trunc(s * m), -32768, 32767)` for every sample.
pub fn apply_gain_in_place(samples: &mut [i16], multiplier: f64) -> Result<(), AudioError> {
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(AudioError::BadMultiplier(multiplier));
    }
    for s in samples.iter_mut() {
        // `as i64` truncates toward zero and saturates
        let amplified = (f64::from(*s) * multiplier) as i64;
        *s = amplified.clamp(i64::from(i16::MIN), i64::from(i16::MAX)) as i16;
    }
    Ok(())
}

pub fn apply_gain(buf: &PcmBuffer, multiplier: f64) -> Result<PcmBuffer, AudioError> {
    let mut out = buf.clone();
    apply_gain_in_place(&mut out.samples, multiplier)?;
    Ok(out)
}
