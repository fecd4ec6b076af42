//! The study protocol as an event-driven state machine.
//!
//! A [`Session`] owns the clock, the trial chain and the phase cursor. Callers
//! feed it [`Event`]s one at a time and act on the returned [`Effect`]s; the
//! machine never performs I/O itself.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, StimulusDescriptor, StimulusTiming};
use crate::haptic::{schedule_for_trial, schedule_pair, HapticCommand, DEFAULT_INTENSITY, MODULE_COUNT};
use crate::music::{next_trial, tone_from_midi, Interval, Trial, TrialPhase, TrialRng};
use purrfect_stats::Q2Item;

pub const TEST_TRIALS: u32 = 20;
pub const SPATIAL_TRIALS: u32 = MODULE_COUNT as u32;
pub const TRAINING_MS: u64 = 600_000;
pub const FEEDBACK_MS: u64 = 2_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("spatial test requires the audio-haptic condition")]
    WrongCondition,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid trial record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Timing(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    AudioOnly,
    AudioHaptic,
}

impl Condition {
    pub fn is_haptic(self) -> bool {
        self == Condition::AudioHaptic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Questionnaire,
    SpatialTest,
    PreTest,
    Training,
    Break,
    PostTest,
}

impl PhaseKind {
    pub fn has_trials(self) -> bool {
        matches!(self, PhaseKind::SpatialTest | PhaseKind::PreTest | PhaseKind::Training | PhaseKind::PostTest)
    }

    fn trial_phase(self) -> Option<TrialPhase> {
        match self {
            PhaseKind::SpatialTest => Some(TrialPhase::SpatialTest),
            PhaseKind::PreTest => Some(TrialPhase::PreTest),
            PhaseKind::Training => Some(TrialPhase::Training),
            PhaseKind::PostTest => Some(TrialPhase::PostTest),
            PhaseKind::Questionnaire | PhaseKind::Break => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionnaireId {
    /// Demographics, stored as given.
    Q1,
    /// Workload items on 1-7 scales.
    Q2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub kind: PhaseKind,
    pub trial_count: Option<u32>,
    pub duration_ms: Option<u64>,
    pub feedback: bool,
    pub haptics: bool,
    pub audio: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questionnaire: Option<QuestionnaireId>,
}

impl PhaseSpec {
    pub fn questionnaire(id: QuestionnaireId) -> Self {
        PhaseSpec {
            kind: PhaseKind::Questionnaire,
            trial_count: None,
            duration_ms: None,
            feedback: false,
            haptics: false,
            audio: false,
            questionnaire: Some(id),
        }
    }

    pub fn spatial_test() -> Self {
        PhaseSpec {
            kind: PhaseKind::SpatialTest,
            trial_count: Some(SPATIAL_TRIALS),
            duration_ms: None,
            feedback: false,
            haptics: true,
            audio: false,
            questionnaire: None,
        }
    }

    pub fn pre_test() -> Self {
        Self::test(PhaseKind::PreTest)
    }

    pub fn post_test() -> Self {
        Self::test(PhaseKind::PostTest)
    }

    fn test(kind: PhaseKind) -> Self {
        PhaseSpec {
            kind,
            trial_count: Some(TEST_TRIALS),
            duration_ms: None,
            feedback: false,
            haptics: false,
            audio: true,
            questionnaire: None,
        }
    }

    pub fn training(condition: Condition, duration_ms: u64) -> Self {
        PhaseSpec {
            kind: PhaseKind::Training,
            trial_count: None,
            duration_ms: Some(duration_ms),
            feedback: true,
            haptics: condition.is_haptic(),
            audio: true,
            questionnaire: None,
        }
    }

    pub fn break_phase() -> Self {
        PhaseSpec {
            kind: PhaseKind::Break,
            trial_count: None,
            duration_ms: None,
            feedback: false,
            haptics: false,
            audio: false,
            questionnaire: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub participant_id: String,
    pub condition: Condition,
    pub phases: Vec<PhaseSpec>,
    pub timing: StimulusTiming,
    pub seed: u64,
    #[serde(default = "default_feedback_ms")]
    pub feedback_ms: u64,
    #[serde(default = "default_intensity")]
    pub haptic_intensity: u8,
}

fn default_feedback_ms() -> u64 {
    FEEDBACK_MS
}

fn default_intensity() -> u8 {
    DEFAULT_INTENSITY
}

impl SessionPlan {
    /// Q1, spatial test (haptic only), pre-test, two training blocks around a
    /// break, post-test, Q2.
    pub fn standard(participant_id: impl Into<String>, condition: Condition, seed: u64) -> Self {
        Self::with_training_ms(participant_id, condition, seed, TRAINING_MS)
    }

    pub fn with_training_ms(
        participant_id: impl Into<String>,
        condition: Condition,
        seed: u64,
        training_ms: u64,
    ) -> Self {
        let mut phases = vec![PhaseSpec::questionnaire(QuestionnaireId::Q1)];
        if condition.is_haptic() {
            phases.push(PhaseSpec::spatial_test());
        }
        phases.extend([
            PhaseSpec::pre_test(),
            PhaseSpec::training(condition, training_ms),
            PhaseSpec::break_phase(),
            PhaseSpec::training(condition, training_ms),
            PhaseSpec::post_test(),
            PhaseSpec::questionnaire(QuestionnaireId::Q2),
        ]);
        SessionPlan {
            participant_id: participant_id.into(),
            condition,
            phases,
            timing: StimulusTiming::default(),
            seed,
            feedback_ms: FEEDBACK_MS,
            haptic_intensity: DEFAULT_INTENSITY,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |msg: String| Err(SessionError::InvalidPlan(msg));
        self.timing.validate()?;
        if self.participant_id.trim().is_empty() {
            return bad("participant_id is empty".into());
        }
        if self.phases.is_empty() {
            return bad("no phases".into());
        }
        for (i, p) in self.phases.iter().enumerate() {
            let ctx = |what: &str| format!("phase {i} ({:?}): {what}", p.kind);
            match p.kind {
                PhaseKind::PreTest | PhaseKind::PostTest => {
                    if p.trial_count != Some(TEST_TRIALS) || p.feedback || p.haptics || !p.audio {
                        return bad(ctx("tests run 20 audio trials without feedback or haptics"));
                    }
                }
                PhaseKind::Training => {
                    if !matches!(p.duration_ms, Some(d) if d > 0) || !p.feedback || !p.audio {
                        return bad(ctx("training needs a positive duration, feedback and audio"));
                    }
                    if p.haptics != self.condition.is_haptic() {
                        return bad(ctx("training haptics must follow the condition"));
                    }
                }
                PhaseKind::SpatialTest => {
                    if !self.condition.is_haptic() {
                        return bad(ctx("audio-only plans have no spatial test"));
                    }
                    if p.trial_count != Some(SPATIAL_TRIALS) || p.audio || !p.haptics || p.feedback {
                        return bad(ctx("spatial test runs 8 haptic pairs without audio or feedback"));
                    }
                }
                PhaseKind::Questionnaire => {
                    if p.questionnaire.is_none() {
                        return bad(ctx("questionnaire id missing"));
                    }
                }
                PhaseKind::Break => {}
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let plan: SessionPlan =
            serde_json::from_str(text).map_err(|e| SessionError::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "key", content = "value", rename_all = "snake_case")]
pub enum Key {
    Digit(u8),
    Space,
    Other(String),
}

impl Key {
    /// Maps a browser key name ("5", " ", "Escape") to a [`Key`].
    pub fn parse(name: &str) -> Key {
        match name {
            " " | "Space" | "space" => Key::Space,
            s if s.len() == 1 && s.as_bytes()[0].is_ascii_digit() => Key::Digit(s.as_bytes()[0] - b'0'),
            s => Key::Other(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// Advance the clock by `ms`.
    Tick { ms: u64 },
    StimulusDone,
    Key { key: Key },
    ReplayRequested,
    /// Ends a timed phase at the next trial boundary.
    PhaseTimeout,
    SpatialAnswer { value: f64 },
    QuestionnaireAnswer { id: QuestionnaireId, answers: BTreeMap<String, serde_json::Value> },
    /// Operator ends a break.
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackColor {
    Green,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    EnterPhase { index: usize, kind: PhaseKind },
    StartTrial { phase: PhaseKind, trial_index: u32 },
    PlayAudio { stimulus_id: String, descriptor: StimulusDescriptor },
    SendHaptics { commands: Vec<HapticCommand> },
    /// Responses are accepted from now on.
    ResponseOpen { trial_index: u32 },
    ShowFeedback { color: FeedbackColor, correct_degree: u8 },
    RecordTrial { record: TrialRecord },
    PromptSpatial { trial_index: u32 },
    PromptQuestionnaire { id: QuestionnaireId },
    RecordQuestionnaire { id: QuestionnaireId, answers: BTreeMap<String, serde_json::Value> },
    Rejected { reason: String },
    EndSession,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Awaiting {
    StimulusPlaying,
    Response,
    /// Post-response pause; feedback is on screen only in phases that show it.
    FeedbackShown,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant_id: String,
    pub condition: Condition,
    pub phase: PhaseKind,
    /// 0-based within the phase.
    pub trial_index: u32,
    /// First tone; absent for spatial pairs.
    pub base_midi: Option<u8>,
    /// Interval degree, or the target module for spatial pairs.
    pub interval_degree: u8,
    pub response_degree: Option<u8>,
    pub spatial_response: Option<f64>,
    pub correct: Option<bool>,
    /// From the first onset of the first presentation to the answer.
    pub response_time_ms: f64,
    pub repeats: u32,
    pub stimulus_onset: DateTime<Utc>,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |msg: &str| Err(SessionError::InvalidRecord(format!("trial {}: {msg}", self.trial_index)));
        if self.participant_id.is_empty() {
            return bad("participant_id is empty");
        }
        if !(1..=8).contains(&self.interval_degree) {
            return bad("interval_degree outside 1..=8");
        }
        if !(self.response_time_ms.is_finite() && self.response_time_ms > 0.0) {
            return bad("response_time_ms must be positive");
        }
        match self.phase {
            PhaseKind::SpatialTest => {
                if self.correct.is_some() || self.response_degree.is_some() || self.base_midi.is_some() {
                    return bad("spatial records carry only a magnitude");
                }
                if !matches!(self.spatial_response, Some(v) if v.is_finite() && v > 0.0) {
                    return bad("spatial response must be a positive number");
                }
            }
            PhaseKind::PreTest | PhaseKind::Training | PhaseKind::PostTest => {
                let Some(resp) = self.response_degree else { return bad("response_degree missing") };
                if !(1..=8).contains(&resp) {
                    return bad("response_degree outside 1..=8");
                }
                if self.correct != Some(resp == self.interval_degree) {
                    return bad("correct disagrees with the degrees");
                }
                if self.spatial_response.is_some() {
                    return bad("interval records have no spatial response");
                }
                let Some(midi) = self.base_midi else { return bad("base_midi missing") };
                let base = tone_from_midi(midi as i32).map_err(|e| SessionError::InvalidRecord(e.to_string()))?;
                let interval =
                    Interval::new(self.interval_degree).map_err(|e| SessionError::InvalidRecord(e.to_string()))?;
                crate::music::apply_interval(base, interval).map_err(|e| SessionError::InvalidRecord(e.to_string()))?;
            }
            PhaseKind::Questionnaire | PhaseKind::Break => return bad("phase has no trials"),
        }
        Ok(())
    }
}

/// Presentation order for the spatial task: modules 1..=8, each once, seeded.
pub fn run_spatial_test(plan: &SessionPlan, rng: &mut TrialRng) -> Result<Vec<u8>, SessionError> {
    if !plan.condition.is_haptic() {
        return Err(SessionError::WrongCondition);
    }
    let mut order: Vec<u8> = (1..=MODULE_COUNT).collect();
    order.shuffle(rng.rng());
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnoredEvent {
    pub clock_ms: u64,
    pub event: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stimulus {
    Interval(Trial),
    Pair(u8),
}

impl Stimulus {
    fn degree(&self) -> u8 {
        match self {
            Stimulus::Interval(t) => t.interval.degree(),
            Stimulus::Pair(m) => *m,
        }
    }
}

#[derive(Debug, Clone)]
struct ActiveTrial {
    index: u32,
    stimulus: Stimulus,
    first_onset_ms: u64,
    /// Onset of the latest presentation (differs after a replay).
    play_onset_ms: u64,
    repeats: u32,
    response_ms: Option<u64>,
}

/// Observable state; see [`Session`] for the machine itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionState {
    pub current_phase: usize,
    pub phase_kind: Option<PhaseKind>,
    pub current_trial: Option<u32>,
    pub awaiting: Awaiting,
    pub repeats_this_trial: u32,
    pub clock_ms: u64,
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct Session {
    plan: SessionPlan,
    started_at: DateTime<Utc>,
    rng: TrialRng,
    clock_ms: u64,
    phase: usize,
    phase_start_ms: u64,
    timed_out: bool,
    trials_done: u32,
    chain: Option<Trial>,
    spatial_order: Vec<u8>,
    active: Option<ActiveTrial>,
    awaiting: Awaiting,
    finished: bool,
    ignored: Vec<IgnoredEvent>,
}

impl Session {
    /// Validates the plan and enters the first phase.
    pub fn start(plan: SessionPlan, started_at: DateTime<Utc>) -> Result<(Session, Vec<Effect>), SessionError> {
        plan.validate()?;
        let rng = TrialRng::new(plan.seed);
        let mut s = Session {
            plan,
            started_at,
            rng,
            clock_ms: 0,
            phase: 0,
            phase_start_ms: 0,
            timed_out: false,
            trials_done: 0,
            chain: None,
            spatial_order: Vec::new(),
            active: None,
            awaiting: Awaiting::Idle,
            finished: false,
            ignored: Vec::new(),
        };
        let mut fx = Vec::new();
        s.enter_phase(0, &mut fx);
        Ok((s, fx))
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            current_phase: self.phase,
            phase_kind: self.current_phase().map(|p| p.kind),
            current_trial: self.active.as_ref().map(|a| a.index),
            awaiting: self.awaiting,
            repeats_this_trial: self.active.as_ref().map_or(0, |a| a.repeats),
            clock_ms: self.clock_ms,
            finished: self.finished,
        }
    }

    pub fn current_phase(&self) -> Option<&PhaseSpec> {
        if self.finished {
            None
        } else {
            self.plan.phases.get(self.phase)
        }
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Interval trial currently presented, if any.
    pub fn current_trial(&self) -> Option<&Trial> {
        match &self.active.as_ref()?.stimulus {
            Stimulus::Interval(t) => Some(t),
            Stimulus::Pair(_) => None,
        }
    }

    /// Target module of the spatial pair currently presented, if any.
    pub fn current_pair(&self) -> Option<u8> {
        match self.active.as_ref()?.stimulus {
            Stimulus::Pair(m) => Some(m),
            Stimulus::Interval(_) => None,
        }
    }

    /// Clock time at which the current trial was first presented.
    pub fn trial_onset_ms(&self) -> Option<u64> {
        self.active.as_ref().map(|a| a.first_onset_ms)
    }

    /// Clock time at which responses open for the current presentation.
    pub fn response_open_ms(&self) -> Option<u64> {
        self.active.as_ref().map(|a| a.play_onset_ms + self.plan.timing.second_onset_ms() as u64)
    }

    pub fn ignored_events(&self) -> &[IgnoredEvent] {
        &self.ignored
    }

    pub fn advance(&mut self, event: Event) -> Vec<Effect> {
        let mut fx = Vec::new();
        if self.finished {
            self.ignore(&event, "session finished");
            return fx;
        }
        match event {
            Event::Tick { ms } => {
                self.clock_ms += ms;
                self.poll_timers(&mut fx);
            }
            Event::StimulusDone => {
                if self.awaiting == Awaiting::StimulusPlaying {
                    self.open_response(&mut fx);
                } else {
                    self.ignore(&event, "no stimulus playing");
                }
            }
            Event::Key { key: Key::Space } | Event::ReplayRequested => {
                if self.awaiting == Awaiting::Response {
                    self.replay(&mut fx);
                } else {
                    self.ignore(&event, "replay only while awaiting a response");
                }
            }
            Event::Key { key: Key::Digit(d) } => {
                let interval_phase = matches!(self.active, Some(ActiveTrial { stimulus: Stimulus::Interval(_), .. }));
                if self.awaiting != Awaiting::Response {
                    self.ignore(&event, "not awaiting a response");
                } else if !interval_phase {
                    self.ignore(&event, "digits answer interval trials only");
                } else if !(1..=8).contains(&d) {
                    self.ignore(&event, "digit outside 1..=8");
                } else {
                    self.answer_interval(d, &mut fx);
                }
            }
            Event::Key { key: Key::Other(_) } => self.ignore(&event, "unmapped key"),
            Event::SpatialAnswer { value } => {
                let spatial = matches!(self.active, Some(ActiveTrial { stimulus: Stimulus::Pair(_), .. }));
                if self.awaiting != Awaiting::Response || !spatial {
                    self.ignore(&event, "no spatial prompt open");
                } else if !(value.is_finite() && value > 0.0) {
                    fx.push(Effect::Rejected { reason: "enter a non-zero, positive number".into() });
                    fx.push(Effect::PromptSpatial { trial_index: self.active.as_ref().map_or(0, |a| a.index) });
                } else {
                    self.answer_spatial(value, &mut fx);
                }
            }
            Event::PhaseTimeout => match self.current_phase().map(|p| p.kind) {
                Some(PhaseKind::Training) => {
                    self.timed_out = true;
                    if self.active.is_none() {
                        self.next_phase(&mut fx);
                    }
                }
                _ => self.ignore(&event, "phase is not timed"),
            },
            Event::QuestionnaireAnswer { id, ref answers } => {
                let expected = self.current_phase().and_then(|p| p.questionnaire);
                if expected != Some(id) {
                    self.ignore(&event, "no matching questionnaire open");
                } else if let Err(reason) = validate_answers(id, answers) {
                    fx.push(Effect::Rejected { reason });
                    fx.push(Effect::PromptQuestionnaire { id });
                } else {
                    fx.push(Effect::RecordQuestionnaire { id, answers: answers.clone() });
                    self.next_phase(&mut fx);
                }
            }
            Event::Continue => {
                if self.current_phase().map(|p| p.kind) == Some(PhaseKind::Break) {
                    self.next_phase(&mut fx);
                } else {
                    self.ignore(&event, "continue only ends a break");
                }
            }
        }
        fx
    }

    fn ignore(&mut self, event: &Event, reason: &str) {
        tracing::debug!(clock_ms = self.clock_ms, ?event, reason, "event ignored");
        self.ignored.push(IgnoredEvent {
            clock_ms: self.clock_ms,
            event: serde_json::to_string(event).unwrap_or_default(),
            reason: reason.to_string(),
        });
    }

    fn enter_phase(&mut self, index: usize, fx: &mut Vec<Effect>) {
        self.phase = index;
        self.phase_start_ms = self.clock_ms;
        self.timed_out = false;
        self.trials_done = 0;
        self.active = None;
        self.awaiting = Awaiting::Idle;
        let Some(spec) = self.plan.phases.get(index).cloned() else {
            self.finished = true;
            fx.push(Effect::EndSession);
            return;
        };
        fx.push(Effect::EnterPhase { index, kind: spec.kind });
        match spec.kind {
            PhaseKind::Questionnaire => {
                let id = spec.questionnaire.expect("validated plan");
                fx.push(Effect::PromptQuestionnaire { id });
            }
            PhaseKind::Break => {}
            PhaseKind::SpatialTest => {
                self.spatial_order = run_spatial_test(&self.plan, &mut self.rng).expect("validated plan");
                self.start_trial(self.clock_ms, fx);
            }
            PhaseKind::PreTest | PhaseKind::Training | PhaseKind::PostTest => self.start_trial(self.clock_ms, fx),
        }
    }

    fn next_phase(&mut self, fx: &mut Vec<Effect>) {
        self.enter_phase(self.phase + 1, fx);
    }

    fn start_trial(&mut self, onset_ms: u64, fx: &mut Vec<Effect>) {
        let spec = self.plan.phases[self.phase].clone();
        let index = self.trials_done;
        let stimulus = if spec.kind == PhaseKind::SpatialTest {
            Stimulus::Pair(self.spatial_order[index as usize])
        } else {
            let phase = spec.kind.trial_phase().expect("trial phase");
            let trial = next_trial(self.chain.as_ref(), &mut self.rng, phase);
            self.chain = Some(trial);
            Stimulus::Interval(trial)
        };
        self.active = Some(ActiveTrial {
            index,
            stimulus,
            first_onset_ms: onset_ms,
            play_onset_ms: onset_ms,
            repeats: 0,
            response_ms: None,
        });
        fx.push(Effect::StartTrial { phase: spec.kind, trial_index: index });
        self.present(fx);
        self.poll_timers(fx);
    }

    fn present(&mut self, fx: &mut Vec<Effect>) {
        let spec = &self.plan.phases[self.phase];
        let active = self.active.as_ref().expect("active trial");
        let timing = self.plan.timing;
        match active.stimulus {
            Stimulus::Interval(trial) => {
                if spec.audio {
                    fx.push(Effect::PlayAudio {
                        stimulus_id: format!("p{}-t{}", self.phase, active.index),
                        descriptor: StimulusDescriptor::for_trial(&trial, timing),
                    });
                }
                if spec.haptics {
                    fx.push(Effect::SendHaptics {
                        commands: schedule_for_trial(&trial, timing, self.plan.haptic_intensity).to_vec(),
                    });
                }
            }
            Stimulus::Pair(module) => {
                if spec.haptics {
                    fx.push(Effect::SendHaptics {
                        commands: schedule_pair(module, timing, self.plan.haptic_intensity).to_vec(),
                    });
                }
            }
        }
        self.awaiting = Awaiting::StimulusPlaying;
    }

    fn replay(&mut self, fx: &mut Vec<Effect>) {
        let clock = self.clock_ms;
        let active = self.active.as_mut().expect("awaiting response implies a trial");
        active.repeats += 1;
        active.play_onset_ms = clock;
        self.present(fx);
    }

    fn open_response(&mut self, fx: &mut Vec<Effect>) {
        self.awaiting = Awaiting::Response;
        let active = self.active.as_ref().expect("trial");
        match active.stimulus {
            Stimulus::Interval(_) => fx.push(Effect::ResponseOpen { trial_index: active.index }),
            Stimulus::Pair(_) => fx.push(Effect::PromptSpatial { trial_index: active.index }),
        }
    }

    fn record(&mut self, response_degree: Option<u8>, spatial: Option<f64>) -> TrialRecord {
        let spec = &self.plan.phases[self.phase];
        let clock = self.clock_ms;
        let active = self.active.as_mut().expect("trial");
        active.response_ms = Some(clock);
        let degree = active.stimulus.degree();
        let base_midi = match active.stimulus {
            Stimulus::Interval(t) => Some(t.base.midi()),
            Stimulus::Pair(_) => None,
        };
        let onset = self.started_at + Duration::milliseconds(active.first_onset_ms as i64);
        TrialRecord {
            participant_id: self.plan.participant_id.clone(),
            condition: self.plan.condition,
            phase: spec.kind,
            trial_index: active.index,
            base_midi,
            interval_degree: degree,
            response_degree,
            spatial_response: spatial,
            correct: response_degree.map(|r| r == degree),
            response_time_ms: (clock - active.first_onset_ms) as f64,
            repeats: active.repeats,
            stimulus_onset: onset,
        }
    }

    fn answer_interval(&mut self, digit: u8, fx: &mut Vec<Effect>) {
        let record = self.record(Some(digit), None);
        let feedback = self.plan.phases[self.phase].feedback;
        let correct = record.correct == Some(true);
        let degree = record.interval_degree;
        fx.push(Effect::RecordTrial { record });
        if feedback {
            let color = if correct { FeedbackColor::Green } else { FeedbackColor::Red };
            fx.push(Effect::ShowFeedback { color, correct_degree: degree });
        }
        self.awaiting = Awaiting::FeedbackShown;
        self.poll_timers(fx);
    }

    fn answer_spatial(&mut self, value: f64, fx: &mut Vec<Effect>) {
        let record = self.record(None, Some(value));
        fx.push(Effect::RecordTrial { record });
        self.awaiting = Awaiting::FeedbackShown;
        self.poll_timers(fx);
    }

    /// Applies every transition whose deadline the clock has passed.
    fn poll_timers(&mut self, fx: &mut Vec<Effect>) {
        loop {
            match self.awaiting {
                Awaiting::StimulusPlaying => {
                    let open = self.response_open_ms().expect("trial");
                    if self.clock_ms < open {
                        return;
                    }
                    self.open_response(fx);
                }
                Awaiting::FeedbackShown => {
                    let responded = self.active.as_ref().and_then(|a| a.response_ms).expect("answered");
                    let boundary = responded + self.plan.feedback_ms;
                    if self.clock_ms < boundary {
                        return;
                    }
                    self.finish_trial(boundary, fx);
                }
                Awaiting::Response | Awaiting::Idle => return,
            }
        }
    }

    fn finish_trial(&mut self, boundary_ms: u64, fx: &mut Vec<Effect>) {
        self.trials_done += 1;
        self.active = None;
        self.awaiting = Awaiting::Idle;
        let spec = &self.plan.phases[self.phase];
        let done = match (spec.trial_count, spec.duration_ms) {
            (Some(n), _) => self.trials_done >= n,
            (None, Some(d)) => self.timed_out || boundary_ms - self.phase_start_ms >= d,
            (None, None) => true,
        };
        if done {
            // The phase boundary sits at the end of the post-response pause.
            self.enter_phase_at(boundary_ms, fx);
        } else {
            self.start_trial(boundary_ms, fx);
        }
    }

    fn enter_phase_at(&mut self, boundary_ms: u64, fx: &mut Vec<Effect>) {
        let clock = self.clock_ms;
        self.clock_ms = boundary_ms;
        self.next_phase(fx);
        // Phases entered here start their first trial at the boundary; the
        // clock then catches up to real time.
        self.clock_ms = clock;
        self.poll_timers(fx);
    }
}

fn validate_answers(id: QuestionnaireId, answers: &BTreeMap<String, serde_json::Value>) -> Result<(), String> {
    match id {
        QuestionnaireId::Q1 => {
            if answers.is_empty() {
                return Err("questionnaire is empty".into());
            }
        }
        QuestionnaireId::Q2 => {
            for item in Q2Item::ALL {
                match answers.get(item.key()).and_then(|v| v.as_i64()) {
                    Some(v) if (1..=7).contains(&v) => {}
                    Some(v) => return Err(format!("{} must be on the 1-7 scale, got {v}", item.key())),
                    None => return Err(format!("{} is unanswered", item.key())),
                }
            }
            if let Some(extra) = answers.keys().find(|k| Q2Item::from_key(k).is_none()) {
                return Err(format!("unknown item {extra}"));
            }
        }
    }
    Ok(())
}
