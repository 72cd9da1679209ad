//! ITU-R BS.1770 integrated loudness and true-peak.
//!
//! Signal chain per channel: K-weighting (high-shelf pre-filter followed by
//! an RLB high-pass), mean square over 100 ms sub-blocks, 400 ms gating
//! blocks stepped by 100 ms (75 % overlap), absolute gate at -70 LKFS,
//! relative gate 10 LU under the absolutely gated mean.
//!
//! Filter coefficients are derived from the analog prototype for any sample
//! rate, which reproduces the tabulated 48 kHz coefficients.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{apply_gain, AudioError, PcmBuffer};

pub const ABSOLUTE_GATE_LKFS: f64 = -70.0;
pub const RELATIVE_GATE_LU: f64 = -10.0;
const LOUDNESS_OFFSET: f64 = -0.691;
const FULL_SCALE: f64 = 32768.0;

/// `-inf` travels through JSON as `null`.
mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoudnessReport {
    /// LUFS; `-inf` (JSON `null`) when nothing passes the absolute gate.
    #[serde(with = "neg_inf_as_null")]
    pub integrated_lufs: f64,
    /// dBTP; `-inf` (JSON `null`) for digital silence.
    #[serde(with = "neg_inf_as_null")]
    pub true_peak_dbtp: f64,
    pub gated_block_count: usize,
    pub below_gate: bool,
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    fn new(b0: f64, b1: f64, b2: f64, a1: f64, a2: f64) -> Self {
        Self {
            b0,
            b1,
            b2,
            a1,
            a2,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    /// Stage 1: +4 dB high shelf modelling the head.
    fn high_shelf(rate: f64) -> Self {
        let gain_db = 3.999_843_853_973_347;
        let q = 0.707_175_236_955_419_3;
        let fc = 1_681.974_450_955_533;
        let k = (PI * fc / rate).tan();
        let vh = 10f64.powf(gain_db / 20.0);
        let vb = vh.powf(0.499_666_774_154_541_6);
        let a0 = 1.0 + k / q + k * k;
        Self::new(
            (vh + vb * k / q + k * k) / a0,
            2.0 * (k * k - vh) / a0,
            (vh - vb * k / q + k * k) / a0,
            2.0 * (k * k - 1.0) / a0,
            (1.0 - k / q + k * k) / a0,
        )
    }

    /// Stage 2: RLB high-pass.
    fn high_pass(rate: f64) -> Self {
        let q = 0.500_327_037_323_877_3;
        let fc = 38.135_470_876_024_44;
        let k = (PI * fc / rate).tan();
        let a0 = 1.0 + k / q + k * k;
        Self::new(1.0, -2.0, 1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0)
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn check_rate(buf: &PcmBuffer) -> Result<(), AudioError> {
    match buf.sample_rate {
        44_100 | 48_000 => Ok(()),
        r => Err(AudioError::SampleRate(r)),
    }
}

/// Mean square of the K-weighted signal for every complete 100 ms sub-block,
/// summed over channels (all channel weights are 1 for mono and stereo).
fn subblock_powers(buf: &PcmBuffer) -> Vec<f64> {
    let rate = f64::from(buf.sample_rate);
    let per_block = (buf.sample_rate / 10) as usize;
    let n_blocks = buf.frames() / per_block;
    let mut powers = vec![0.0; n_blocks];
    for c in 0..buf.channels as usize {
        let mut shelf = Biquad::high_shelf(rate);
        let mut hp = Biquad::high_pass(rate);
        let mut acc = 0.0;
        let mut count = 0;
        let mut block = 0;
        for s in buf.channel(c) {
            if block == n_blocks {
                break;
            }
            let y = hp.process(shelf.process(f64::from(s) / FULL_SCALE));
            acc += y * y;
            count += 1;
            if count == per_block {
                powers[block] += acc / per_block as f64;
                acc = 0.0;
                count = 0;
                block += 1;
            }
        }
    }
    powers
}

fn lkfs(power: f64) -> f64 {
    LOUDNESS_OFFSET + 10.0 * power.log10()
}

/// Gated integrated loudness plus true peak.
pub fn integrated_loudness(buf: &PcmBuffer) -> Result<LoudnessReport, AudioError> {
    check_rate(buf)?;
    let sub = subblock_powers(buf);
    let blocks: Vec<f64> = sub.windows(4).map(|w| w.iter().sum::<f64>() / 4.0).collect();

    let abs_gated: Vec<f64> = blocks
        .iter()
        .copied()
        .filter(|&z| lkfs(z) > ABSOLUTE_GATE_LKFS)
        .collect();
    let true_peak_dbtp = true_peak(buf);
    if abs_gated.is_empty() {
        return Ok(LoudnessReport {
            integrated_lufs: f64::NEG_INFINITY,
            true_peak_dbtp,
            gated_block_count: 0,
            below_gate: true,
        });
    }
    let abs_mean = abs_gated.iter().sum::<f64>() / abs_gated.len() as f64;
    let relative_gate = lkfs(abs_mean) + RELATIVE_GATE_LU;
    let gated: Vec<f64> = abs_gated.into_iter().filter(|&z| lkfs(z) > relative_gate).collect();
    let mean = gated.iter().sum::<f64>() / gated.len() as f64;
    Ok(LoudnessReport {
        integrated_lufs: lkfs(mean),
        true_peak_dbtp,
        gated_block_count: gated.len(),
        below_gate: false,
    })
}

const OVERSAMPLE: usize = 4;
const HALF_TAPS: isize = 16;

/// Windowed-sinc interpolation kernels, one per fractional phase
/// `p / OVERSAMPLE`, each normalised to unit DC gain.
fn interpolation_kernels() -> Vec<Vec<f64>> {
    (0..OVERSAMPLE)
        .map(|p| {
            let frac = p as f64 / OVERSAMPLE as f64;
            let span = HALF_TAPS as f64 + 1.0;
            let mut taps: Vec<f64> = (-HALF_TAPS + 1..=HALF_TAPS)
                .map(|k| {
                    // sample x[n + k] contributes to y(n + frac)
                    let d = frac - k as f64;
                    let sinc = if d == 0.0 { 1.0 } else { (PI * d).sin() / (PI * d) };
                    // Blackman window over [-span, span]
                    let u = (d + span) / (2.0 * span);
                    let w = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
                    sinc * w
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            taps
        })
        .collect()
}

/// Max absolute value of the 4x oversampled signal in dBTP; `-inf` for
/// silence. Includes the original samples (phase 0).
pub fn true_peak(buf: &PcmBuffer) -> f64 {
    let kernels = interpolation_kernels();
    let mut peak = 0.0f64;
    for c in 0..buf.channels as usize {
        let x: Vec<f64> = buf.channel(c).map(|s| f64::from(s) / FULL_SCALE).collect();
        let n = x.len() as isize;
        for i in 0..n {
            peak = peak.max(x[i as usize].abs());
            for taps in &kernels[1..] {
                let mut y = 0.0;
                for (j, h) in taps.iter().enumerate() {
                    let idx = i + j as isize - HALF_TAPS + 1;
                    if (0..n).contains(&idx) {
                        y += h * x[idx as usize];
                    }
                }
                peak = peak.max(y.abs());
            }
        }
    }
    if peak == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * peak.log10()
    }
}

/// Hard-knee ceiling: scales the whole buffer down so its true peak does not
/// exceed `ceiling_dbtp`. Buffers already under the ceiling are returned
/// unchanged.
pub fn enforce_true_peak_ceiling(buf: &PcmBuffer, ceiling_dbtp: f64) -> PcmBuffer {
    let mut out = buf.clone();
    for _ in 0..4 {
        let tp = true_peak(&out);
        // silence (-inf) or already within the ceiling
        if tp.is_nan() || tp <= ceiling_dbtp {
            break;
        }
        // aim slightly below to absorb requantisation
        let scale = 10f64.powf((ceiling_dbtp - tp - 0.01) / 20.0);
        out = apply_gain(&out, scale).expect("scale is positive and finite");
    }
    out
}
