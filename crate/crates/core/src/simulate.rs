//! Scripted participants that drive a real [`Session`] with sampled behavior.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::session::{Awaiting, Effect, Event, Key, PhaseKind, QuestionnaireId, Session, SessionError, SessionPlan, TrialRecord};
use purrfect_stats::Q2Item;

/// Break length used when the scripted participant pauses between blocks.
const BREAK_MS: u64 = 120_000;

/// Probability of a correct answer during training, as a function of the
/// 1-based training trial number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum AccuracyModel {
    Constant { p: f64 },
    Logistic { intercept: f64, slope: f64 },
}

impl AccuracyModel {
    pub fn probability(&self, trial_number: u32) -> f64 {
        match *self {
            AccuracyModel::Constant { p } => p,
            AccuracyModel::Logistic { intercept, slope } => {
                1.0 / (1.0 + (-(intercept + slope * trial_number as f64)).exp())
            }
        }
    }
}

/// Free magnitude answers: `scale * module^exponent`, times lognormal noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialModel {
    pub scale: f64,
    pub exponent: f64,
    pub noise_sd_log: f64,
}

impl Default for SpatialModel {
    fn default() -> Self {
        SpatialModel { scale: 1.0, exponent: 0.9, noise_sd_log: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub training: AccuracyModel,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    /// Arithmetic mean of the response time in seconds.
    pub rt_mean_s: f64,
    pub rt_sd_log: f64,
    pub replay_probability: f64,
    pub spatial: SpatialModel,
    /// Mean raw answer per Q2 item key.
    pub q2_means: BTreeMap<String, f64>,
}

impl Behavior {
    /// Guessing among the eight intervals.
    pub fn chance() -> Self {
        Behavior {
            training: AccuracyModel::Constant { p: 0.125 },
            pre_accuracy: 0.125,
            post_accuracy: 0.125,
            rt_mean_s: 5.0,
            rt_sd_log: 0.4,
            replay_probability: 0.1,
            spatial: SpatialModel::default(),
            q2_means: Q2Item::ALL.iter().map(|i| (i.key().to_string(), 4.0)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let ok = prob(self.pre_accuracy)
            && prob(self.post_accuracy)
            && prob(self.replay_probability)
            && self.rt_mean_s > 0.0
            && self.rt_sd_log >= 0.0
            && self.spatial.scale > 0.0
            && self.spatial.noise_sd_log >= 0.0
            && match self.training {
                AccuracyModel::Constant { p } => prob(p),
                AccuracyModel::Logistic { intercept, slope } => intercept.is_finite() && slope.is_finite(),
            };
        if ok {
            Ok(())
        } else {
            Err(SessionError::InvalidPlan("behavior parameters out of range".into()))
        }
    }

    /// Shifts accuracies on the logit scale and response times on the log
    /// scale, giving one participant's behavior.
    pub fn individualize(&self, logit_sd: f64, rt_sd_s: f64, rng: &mut ChaCha8Rng) -> Behavior {
        let shift = if logit_sd > 0.0 { Normal::new(0.0, logit_sd).unwrap().sample(rng) } else { 0.0 };
        let rt_shift = if rt_sd_s > 0.0 { Normal::new(0.0, rt_sd_s).unwrap().sample(rng) } else { 0.0 };
        let nudge = |p: f64| {
            if p <= 0.0 || p >= 1.0 {
                p
            } else {
                let l = (p / (1.0 - p)).ln() + shift;
                1.0 / (1.0 + (-l).exp())
            }
        };
        let training = match self.training {
            AccuracyModel::Constant { p } => AccuracyModel::Constant { p: nudge(p) },
            AccuracyModel::Logistic { intercept, slope } => AccuracyModel::Logistic { intercept: intercept + shift, slope },
        };
        Behavior {
            training,
            pre_accuracy: nudge(self.pre_accuracy),
            post_accuracy: nudge(self.post_accuracy),
            rt_mean_s: (self.rt_mean_s + rt_shift).max(1.0),
            ..self.clone()
        }
    }
}

/// Items the datastore keeps, in session order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogItem {
    Record(TrialRecord),
    Questionnaire { id: QuestionnaireId, answers: BTreeMap<String, serde_json::Value> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSession {
    pub log: Vec<LogItem>,
    pub effects: Vec<Effect>,
    pub duration_ms: u64,
}

impl SimulatedSession {
    pub fn records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.log.iter().filter_map(|i| match i {
            LogItem::Record(r) => Some(r),
            LogItem::Questionnaire { .. } => None,
        })
    }
}

/// Wrong answers favor neighbouring degrees.
fn wrong_answer(truth: u8, rng: &mut ChaCha8Rng) -> u8 {
    let others: Vec<u8> = (1..=8).filter(|&d| d != truth).collect();
    let weights: Vec<f64> = others.iter().map(|&d| (-(d as f64 - truth as f64).abs() / 2.0).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (d, w) in others.iter().zip(&weights) {
        if x < *w {
            return *d;
        }
        x -= w;
    }
    *others.last().unwrap()
}

fn questionnaire_answers(
    id: QuestionnaireId,
    behavior: &Behavior,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<String, serde_json::Value> {
    match id {
        QuestionnaireId::Q1 => BTreeMap::from([
            ("age".to_string(), serde_json::json!(rng.random_range(19..=35))),
            ("music_experience_years".to_string(), serde_json::json!(rng.random_range(0..=6))),
        ]),
        QuestionnaireId::Q2 => {
            let noise = Normal::new(0.0, 1.0).unwrap();
            Q2Item::ALL
                .iter()
                .map(|item| {
                    let mean = behavior.q2_means.get(item.key()).copied().unwrap_or(4.0);
                    let raw = (mean + noise.sample(rng)).round().clamp(1.0, 7.0) as i64;
                    (item.key().to_string(), serde_json::json!(raw))
                })
                .collect()
        }
    }
}

/// Runs one full session. Every answer goes through [`Session::advance`], so
/// the log is exactly what the engine recorded.
pub fn simulate_participant(
    plan: &SessionPlan,
    behavior: &Behavior,
    rng: &mut ChaCha8Rng,
    started_at: DateTime<Utc>,
) -> Result<SimulatedSession, SessionError> {
    behavior.validate()?;
    let (mut session, first) = Session::start(plan.clone(), started_at)?;
    let mut effects = first;
    let rt_dist = {
        // Lognormal with the requested arithmetic mean.
        let sd = behavior.rt_sd_log;
        LogNormal::new((behavior.rt_mean_s * 1000.0).ln() - sd * sd / 2.0, sd)
            .map_err(|e| SessionError::InvalidPlan(e.to_string()))?
    };
    let spatial_noise = LogNormal::new(0.0, behavior.spatial.noise_sd_log).map_err(|e| SessionError::InvalidPlan(e.to_string()))?;
    let open_after = plan.timing.second_onset_ms() as u64;
    let mut training_number = 0u32;
    // (response time, replay time) for the trial in progress
    let mut pending: Option<(u64, Option<u64>)> = None;

    while !session.is_finished() {
        let phase = session.current_phase().expect("unfinished session has a phase").clone();
        let awaiting = session.state().awaiting;
        let fx = match (phase.kind, awaiting) {
            (PhaseKind::Questionnaire, _) => {
                let id = phase.questionnaire.expect("validated plan");
                let answers = questionnaire_answers(id, behavior, rng);
                session.advance(Event::QuestionnaireAnswer { id, answers })
            }
            (PhaseKind::Break, _) => {
                session.advance(Event::Tick { ms: BREAK_MS });
                session.advance(Event::Continue)
            }
            (_, Awaiting::StimulusPlaying) | (_, Awaiting::Response) => {
                let onset = session.trial_onset_ms().expect("trial active");
                let (rt, replay) = *pending.get_or_insert_with(|| {
                    let mut rt = rt_dist.sample(rng).round() as u64;
                    let replay = (rng.random::<f64>() < behavior.replay_probability).then_some(open_after + 200);
                    let earliest = replay.map_or(open_after, |r| r + open_after) + 50;
                    rt = rt.max(earliest);
                    (rt, replay)
                });
                let now = session.clock_ms() - onset;
                let replay_due = replay.filter(|_| session.state().repeats_this_trial == 0);
                if let Some(r) = replay_due {
                    if now < r {
                        session.advance(Event::Tick { ms: r - now })
                    } else {
                        session.advance(Event::ReplayRequested)
                    }
                } else if now < rt || awaiting == Awaiting::StimulusPlaying {
                    session.advance(Event::Tick { ms: (rt.max(now + 1)) - now })
                } else {
                    pending = None;
                    match session.current_trial().copied() {
                        Some(trial) => {
                            let truth = trial.interval.degree();
                            let p = match phase.kind {
                                PhaseKind::PreTest => behavior.pre_accuracy,
                                PhaseKind::PostTest => behavior.post_accuracy,
                                _ => {
                                    training_number += 1;
                                    behavior.training.probability(training_number)
                                }
                            };
                            let digit = if rng.random::<f64>() < p { truth } else { wrong_answer(truth, rng) };
                            session.advance(Event::Key { key: Key::Digit(digit) })
                        }
                        None => {
                            let module = session.current_pair().expect("spatial pair active") as f64;
                            let value = behavior.spatial.scale
                                * module.powf(behavior.spatial.exponent)
                                * spatial_noise.sample(rng);
                            let value = (value * 100.0).round().max(1.0) / 100.0;
                            session.advance(Event::SpatialAnswer { value })
                        }
                    }
                }
            }
            (_, Awaiting::FeedbackShown) => session.advance(Event::Tick { ms: plan.feedback_ms }),
            (_, Awaiting::Idle) => unreachable!("trial phases always hold a trial"),
        };
        effects.extend(fx);
    }

    let log = effects
        .iter()
        .filter_map(|e| match e {
            Effect::RecordTrial { record } => Some(LogItem::Record(record.clone())),
            Effect::RecordQuestionnaire { id, answers } => Some(LogItem::Questionnaire { id: *id, answers: answers.clone() }),
            _ => None,
        })
        .collect();
    Ok(SimulatedSession { log, effects, duration_ms: session.clock_ms() })
}
