//! Two-tone stimulus rendering and 16-bit mono WAV encoding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::Trial;

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
/// Peak level relative to full scale.
pub const AMPLITUDE: f64 = 0.8;
const WAV_HEADER_LEN: usize = 44;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AudioError {
    #[error("invalid timing: {0}")]
    InvalidTiming(String),
    #[error("sample rate {0} Hz is below 8000 Hz")]
    InvalidSampleRate(u32),
    #[error("not a 16-bit mono PCM WAV file: {0}")]
    InvalidWav(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusTiming {
    pub note_ms: u32,
    pub gap_ms: u32,
    pub ramp_ms: u32,
}

impl Default for StimulusTiming {
    /// The second tone ends 1200 ms after the first onset.
    fn default() -> Self {
        StimulusTiming { note_ms: 500, gap_ms: 200, ramp_ms: 10 }
    }
}

impl StimulusTiming {
    /// Alternative reading in which the second tone starts at 1200 ms.
    pub fn late_onset() -> Self {
        StimulusTiming { gap_ms: 700, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.note_ms <= 2 * self.ramp_ms {
            return Err(AudioError::InvalidTiming(format!(
                "note_ms ({}) must exceed twice ramp_ms ({})",
                self.note_ms, self.ramp_ms
            )));
        }
        Ok(())
    }

    pub fn second_onset_ms(&self) -> u32 {
        self.note_ms + self.gap_ms
    }

    pub fn total_ms(&self) -> u32 {
        2 * self.note_ms + self.gap_ms
    }
}

/// Parameters a client needs to synthesize the stimulus itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusDescriptor {
    pub base_hz: f64,
    pub second_hz: f64,
    pub note_ms: u32,
    pub gap_ms: u32,
    pub ramp_ms: u32,
}

impl StimulusDescriptor {
    pub fn for_trial(trial: &Trial, timing: StimulusTiming) -> Self {
        StimulusDescriptor {
            base_hz: trial.base.frequency_hz(),
            second_hz: trial.second.frequency_hz(),
            note_ms: timing.note_ms,
            gap_ms: timing.gap_ms,
            ramp_ms: timing.ramp_ms,
        }
    }

    pub fn timing(&self) -> StimulusTiming {
        StimulusTiming { note_ms: self.note_ms, gap_ms: self.gap_ms, ramp_ms: self.ramp_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcmBuffer {
    pub sample_rate_hz: u32,
    pub samples: Vec<i16>,
}

impl PcmBuffer {
    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate_hz as f64
    }
}

fn ms_to_samples(ms: u32, sample_rate: u32) -> usize {
    (ms as f64 * sample_rate as f64 / 1000.0).round() as usize
}

pub fn render_trial(trial: &Trial, timing: StimulusTiming, sample_rate: u32) -> Result<PcmBuffer, AudioError> {
    render_descriptor(&StimulusDescriptor::for_trial(trial, timing), sample_rate)
}

/// Tone, silence, tone; each tone has linear fade-in and fade-out ramps.
pub fn render_descriptor(desc: &StimulusDescriptor, sample_rate: u32) -> Result<PcmBuffer, AudioError> {
    let timing = desc.timing();
    timing.validate()?;
    if sample_rate < 8000 {
        return Err(AudioError::InvalidSampleRate(sample_rate));
    }
    let total = ms_to_samples(timing.total_ms(), sample_rate);
    let note = ms_to_samples(timing.note_ms, sample_rate);
    let second_onset = ms_to_samples(timing.second_onset_ms(), sample_rate);
    let ramp = ms_to_samples(timing.ramp_ms, sample_rate);
    let mut samples = vec![0i16; total];
    write_tone(&mut samples[..note], desc.base_hz, sample_rate, ramp);
    let end = (second_onset + note).min(total);
    write_tone(&mut samples[second_onset..end], desc.second_hz, sample_rate, ramp);
    Ok(PcmBuffer { sample_rate_hz: sample_rate, samples })
}

fn write_tone(out: &mut [i16], freq: f64, sample_rate: u32, ramp: usize) {
    let n = out.len();
    let peak = AMPLITUDE * i16::MAX as f64;
    let omega = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
    for (k, s) in out.iter_mut().enumerate() {
        let env = if ramp == 0 {
            1.0
        } else {
            let rise = k as f64 / ramp as f64;
            let fall = (n - 1 - k) as f64 / ramp as f64;
            rise.min(fall).min(1.0)
        };
        *s = (peak * env * (omega * k as f64).sin()).round() as i16;
    }
}

/// RIFF/WAVE, PCM format tag 1, 16-bit mono, little-endian.
pub fn encode_wav(buffer: &PcmBuffer) -> Vec<u8> {
    let data_len = (buffer.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(WAV_HEADER_LEN + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in &buffer.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Reads back what [`encode_wav`] writes; other layouts are rejected.
pub fn decode_wav(bytes: &[u8]) -> Result<PcmBuffer, AudioError> {
    let bad = |m: &str| AudioError::InvalidWav(m.to_string());
    if bytes.len() < WAV_HEADER_LEN || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    if &bytes[12..16] != b"fmt " || u16_at(20) != 1 || u16_at(22) != 1 || u16_at(34) != 16 {
        return Err(bad("expected PCM, one channel, 16 bits"));
    }
    if &bytes[36..40] != b"data" {
        return Err(bad("missing data chunk"));
    }
    let len = u32_at(40) as usize;
    let data = bytes.get(WAV_HEADER_LEN..WAV_HEADER_LEN + len).ok_or_else(|| bad("truncated data"))?;
    Ok(PcmBuffer {
        sample_rate_hz: u32_at(24),
        samples: data.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect(),
    })
}
