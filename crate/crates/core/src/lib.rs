//! Experiment engine for interval ear training with a spinal vibrotactile
//! array: tone material, stimulus rendering, the haptic line protocol, the
//! session state machine, scripted participants and session storage.

pub mod audio;
pub mod datastore;
pub mod haptic;
pub mod music;
pub mod session;
pub mod simulate;

pub use audio::{decode_wav, encode_wav, render_trial, PcmBuffer, StimulusDescriptor, StimulusTiming};
pub use haptic::{decode_frame, encode_frame, schedule_for_trial, DeviceEventLog, HapticCommand, SimulatedDevice, VibrationFrame};
pub use music::{apply_interval, next_trial, tone_from_midi, Interval, ScaleTone, Trial, TrialPhase, TrialRng};
pub use session::{Condition, Effect, Event, Key, PhaseKind, PhaseSpec, Session, SessionPlan, TrialRecord};
