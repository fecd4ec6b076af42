//! C-major tones from C2 to B4, inclusive interval degrees and chained trial
//! generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of playable tones: seven degrees over three octaves.
pub const TONE_COUNT: u8 = 21;
pub const LOWEST_MIDI: u8 = 36;
pub const HIGHEST_MIDI: u8 = 71;
/// Scale steps in an octave.
pub const OCTAVE_STEPS: u8 = 7;
/// First trials start at or below B3 so that every interval fits.
pub const FIRST_BASE_MAX_INDEX: u8 = 13;

const DEGREE_SEMITONES: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const DEGREE_NAMES: [&str; 7] = ["C", "D", "E", "F", "G", "A", "B"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MusicError {
    #[error("MIDI note {0} is outside 36..=71 (C2..B4)")]
    OutOfRange(i32),
    #[error("MIDI note {0} is not in C major")]
    NotDiatonic(i32),
    #[error("interval degree {0} is outside 1..=8")]
    InvalidDegree(u8),
    #[error("scale index {0} is outside 0..=20")]
    InvalidIndex(u8),
    #[error("{base} plus interval {degree} goes above B4")]
    RangeOverflow { base: String, degree: u8 },
}

/// A tone of the C-major scale between C2 and B4, identified by its position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ScaleTone(u8);

impl TryFrom<u8> for ScaleTone {
    type Error = MusicError;

    fn try_from(index: u8) -> Result<Self, MusicError> {
        ScaleTone::from_index(index)
    }
}

impl From<ScaleTone> for u8 {
    fn from(t: ScaleTone) -> u8 {
        t.0
    }
}

impl ScaleTone {
    pub fn from_index(index: u8) -> Result<Self, MusicError> {
        if index < TONE_COUNT {
            Ok(ScaleTone(index))
        } else {
            Err(MusicError::InvalidIndex(index))
        }
    }

    pub fn from_midi(midi: i32) -> Result<Self, MusicError> {
        if !(LOWEST_MIDI as i32..=HIGHEST_MIDI as i32).contains(&midi) {
            return Err(MusicError::OutOfRange(midi));
        }
        let offset = (midi - LOWEST_MIDI as i32) as u8;
        let degree = DEGREE_SEMITONES
            .iter()
            .position(|&s| s == offset % 12)
            .ok_or(MusicError::NotDiatonic(midi))?;
        Ok(ScaleTone((offset / 12) * OCTAVE_STEPS + degree as u8))
    }

    pub fn all() -> impl Iterator<Item = ScaleTone> {
        (0..TONE_COUNT).map(ScaleTone)
    }

    pub fn scale_index(self) -> u8 {
        self.0
    }

    pub fn midi(self) -> u8 {
        LOWEST_MIDI + 12 * (self.0 / OCTAVE_STEPS) + DEGREE_SEMITONES[(self.0 % OCTAVE_STEPS) as usize]
    }

    /// Equal temperament referenced to A4 = 440 Hz.
    pub fn frequency_hz(self) -> f64 {
        440.0 * 2f64.powf((self.midi() as f64 - 69.0) / 12.0)
    }

    /// Scientific pitch name, e.g. `F4`.
    pub fn name(self) -> String {
        format!("{}{}", DEGREE_NAMES[(self.0 % OCTAVE_STEPS) as usize], 2 + self.0 / OCTAVE_STEPS)
    }
}

impl std::fmt::Display for ScaleTone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

pub fn tone_from_midi(midi: i32) -> Result<ScaleTone, MusicError> {
    ScaleTone::from_midi(midi)
}

/// Ascending diatonic interval counted inclusively: 1 is unison, 4 spans
/// C to F, 8 is the octave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Interval(u8);

impl TryFrom<u8> for Interval {
    type Error = MusicError;

    fn try_from(degree: u8) -> Result<Self, MusicError> {
        Interval::new(degree)
    }
}

impl From<Interval> for u8 {
    fn from(i: Interval) -> u8 {
        i.0
    }
}

impl Interval {
    pub const UNISON: Interval = Interval(1);
    pub const OCTAVE: Interval = Interval(8);

    pub fn new(degree: u8) -> Result<Self, MusicError> {
        if (1..=8).contains(&degree) {
            Ok(Interval(degree))
        } else {
            Err(MusicError::InvalidDegree(degree))
        }
    }

    pub fn degree(self) -> u8 {
        self.0
    }

    pub fn steps(self) -> u8 {
        self.0 - 1
    }
}

pub fn apply_interval(base: ScaleTone, interval: Interval) -> Result<ScaleTone, MusicError> {
    let index = base.0 + interval.steps();
    if index >= TONE_COUNT {
        return Err(MusicError::RangeOverflow { base: base.name(), degree: interval.degree() });
    }
    Ok(ScaleTone(index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrialPhase {
    SpatialTest,
    PreTest,
    Training,
    PostTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_index: u32,
    pub base: ScaleTone,
    pub interval: Interval,
    pub second: ScaleTone,
    pub phase: TrialPhase,
}

/// Seeded source of trial randomness: ChaCha8 keyed by a 64-bit seed.
#[derive(Debug, Clone)]
pub struct TrialRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl TrialRng {
    pub fn new(seed: u64) -> Self {
        TrialRng { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

/// Draws the next trial. With a previous trial its second tone becomes the new
/// base, moved down by whole octaves until the drawn interval fits under B4.
pub fn next_trial(prev: Option<&Trial>, rng: &mut TrialRng, phase: TrialPhase) -> Trial {
    let (mut base, trial_index) = match prev {
        Some(p) => (p.second, p.trial_index + 1),
        None => (ScaleTone(rng.inner.random_range(0..=FIRST_BASE_MAX_INDEX)), 0),
    };
    let interval = Interval(rng.inner.random_range(1..=8));
    while base.0 + interval.steps() >= TONE_COUNT {
        base = ScaleTone(base.0 - OCTAVE_STEPS);
    }
    let second = apply_interval(base, interval).expect("base was lowered until the interval fits");
    Trial { trial_index, base, interval, second, phase }
}
