//! Spinal vibrotactile array: interval-to-module schedule, the `VIB` line
//! protocol and an in-process simulated device.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::StimulusTiming;
use crate::music::Trial;

pub const MODULE_COUNT: u8 = 8;
pub const DEFAULT_INTENSITY: u8 = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("module {0} is outside 1..=8")]
    ModuleOutOfRange(i64),
    #[error("intensity {0} is outside 0..=255")]
    IntensityOutOfRange(i64),
    #[error("duration must be positive, got {0}")]
    InvalidDuration(i64),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

/// Physical layout along the spine; module 1 sits at the lower back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub module_count: u8,
    pub spacing_cm: f64,
    pub total_length_cm: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        ArrayGeometry { module_count: MODULE_COUNT, spacing_cm: 3.0, total_length_cm: 75.0 }
    }
}

impl ArrayGeometry {
    /// Distance between module 1 and `module`.
    pub fn distance_from_bottom_cm(&self, module: u8) -> f64 {
        (module.saturating_sub(1)) as f64 * self.spacing_cm
    }
}

/// What travels over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VibrationFrame {
    pub module: u8,
    pub intensity: u8,
    pub duration_ms: u32,
}

/// A frame plus when to send it, relative to stimulus start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HapticCommand {
    pub module: u8,
    pub intensity: u8,
    pub duration_ms: u32,
    pub onset_ms: u32,
}

impl HapticCommand {
    pub fn frame(&self) -> VibrationFrame {
        VibrationFrame { module: self.module, intensity: self.intensity, duration_ms: self.duration_ms }
    }
}

/// Bottom module with the first tone, module `k` with the second tone of interval `k`.
pub fn schedule_for_trial(trial: &Trial, timing: StimulusTiming, intensity: u8) -> [HapticCommand; 2] {
    schedule_pair(trial.interval.degree(), timing, intensity)
}

/// The same two-pulse pattern for an arbitrary target module.
pub fn schedule_pair(target_module: u8, timing: StimulusTiming, intensity: u8) -> [HapticCommand; 2] {
    debug_assert!((1..=MODULE_COUNT).contains(&target_module));
    [
        HapticCommand { module: 1, intensity, duration_ms: timing.note_ms, onset_ms: 0 },
        HapticCommand {
            module: target_module,
            intensity,
            duration_ms: timing.note_ms,
            onset_ms: timing.second_onset_ms(),
        },
    ]
}

/// `VIB <module> <intensity> <duration_ms>\n`
pub fn encode_frame(frame: &VibrationFrame) -> Vec<u8> {
    format!("VIB {} {} {}\n", frame.module, frame.intensity, frame.duration_ms).into_bytes()
}

pub fn decode_frame(line: &[u8]) -> Result<VibrationFrame, ProtocolError> {
    let text = std::str::from_utf8(line).map_err(|_| ProtocolError::Malformed("not UTF-8".into()))?;
    let text = text.strip_suffix('\n').unwrap_or(text);
    let text = text.strip_suffix('\r').unwrap_or(text);
    let mut parts = text.split(' ');
    if parts.next() != Some("VIB") {
        return Err(ProtocolError::Malformed(format!("unknown command in {text:?}")));
    }
    let mut field = |name: &str| -> Result<i64, ProtocolError> {
        parts
            .next()
            .ok_or_else(|| ProtocolError::Malformed(format!("missing {name}")))?
            .parse::<i64>()
            .map_err(|_| ProtocolError::Malformed(format!("{name} is not an integer")))
    };
    let module = field("module")?;
    let intensity = field("intensity")?;
    let duration = field("duration")?;
    if parts.next().is_some() {
        return Err(ProtocolError::Malformed("trailing fields".into()));
    }
    if !(1..=MODULE_COUNT as i64).contains(&module) {
        return Err(ProtocolError::ModuleOutOfRange(module));
    }
    if !(0..=255).contains(&intensity) {
        return Err(ProtocolError::IntensityOutOfRange(intensity));
    }
    if !(1..=u32::MAX as i64).contains(&duration) {
        return Err(ProtocolError::InvalidDuration(duration));
    }
    Ok(VibrationFrame { module: module as u8, intensity: intensity as u8, duration_ms: duration as u32 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceEntry {
    Vibrate { receive_time_ms: u64, module: u8, intensity: u8, duration_ms: u32 },
    Error { receive_time_ms: u64, line: String, reason: String },
}

impl DeviceEntry {
    pub fn receive_time_ms(&self) -> u64 {
        match self {
            DeviceEntry::Vibrate { receive_time_ms, .. } | DeviceEntry::Error { receive_time_ms, .. } => {
                *receive_time_ms
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceEventLog {
    pub entries: Vec<DeviceEntry>,
}

impl DeviceEventLog {
    pub fn vibrations(&self) -> impl Iterator<Item = (u64, VibrationFrame)> + '_ {
        self.entries.iter().filter_map(|e| match *e {
            DeviceEntry::Vibrate { receive_time_ms, module, intensity, duration_ms } => {
                Some((receive_time_ms, VibrationFrame { module, intensity, duration_ms }))
            }
            DeviceEntry::Error { .. } => None,
        })
    }

    pub fn error_count(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, DeviceEntry::Error { .. })).count()
    }

    pub fn to_json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entries serialize") + "\n")
            .collect()
    }
}

/// Parses a byte stream line by line and records what a real array would do.
/// Bytes may arrive split across writes; a line is logged at the time its
/// newline arrives.
#[derive(Debug, Default)]
pub struct SimulatedDevice {
    pending: Vec<u8>,
    log: DeviceEventLog,
}

impl SimulatedDevice {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn receive(&mut self, time_ms: u64, bytes: &[u8]) {
        for &b in bytes {
            self.pending.push(b);
            if b == b'\n' {
                let line = std::mem::take(&mut self.pending);
                let entry = match decode_frame(&line) {
                    Ok(f) => DeviceEntry::Vibrate {
                        receive_time_ms: time_ms,
                        module: f.module,
                        intensity: f.intensity,
                        duration_ms: f.duration_ms,
                    },
                    Err(e) => {
                        tracing::warn!(%e, "simulated device rejected a frame");
                        DeviceEntry::Error {
                            receive_time_ms: time_ms,
                            line: String::from_utf8_lossy(&line).trim_end().to_string(),
                            reason: e.to_string(),
                        }
                    }
                };
                self.log.entries.push(entry);
            }
        }
    }

    pub fn log(&self) -> &DeviceEventLog {
        &self.log
    }

    pub fn into_log(self) -> DeviceEventLog {
        self.log
    }
}

/// Feeds `(time, bytes)` chunks to a fresh simulator, in time order.
pub fn simulated_device<I>(frames: I) -> DeviceEventLog
where
    I: IntoIterator<Item = (u64, Vec<u8>)>,
{
    let mut chunks: Vec<_> = frames.into_iter().collect();
    chunks.sort_by_key(|(t, _)| *t);
    let mut dev = SimulatedDevice::new();
    for (t, bytes) in chunks {
        dev.receive(t, &bytes);
    }
    dev.into_log()
}

/// Destination for vibration frames.
pub trait HapticSink: Send {
    fn send(&mut self, time_ms: u64, frame: &VibrationFrame) -> std::io::Result<()>;
}

impl HapticSink for SimulatedDevice {
    fn send(&mut self, time_ms: u64, frame: &VibrationFrame) -> std::io::Result<()> {
        self.receive(time_ms, &encode_frame(frame));
        Ok(())
    }
}

/// Writes frames to any byte channel (serial port, socket, file).
pub struct LineSink<W: Write + Send>(pub W);

impl<W: Write + Send> HapticSink for LineSink<W> {
    fn send(&mut self, _time_ms: u64, frame: &VibrationFrame) -> std::io::Result<()> {
        self.0.write_all(&encode_frame(frame))?;
        self.0.flush()
    }
}
