//! Simulated studies: scripted participants written to a study directory
//! through the session engine and the datastore.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use purrfect_core::audio::StimulusTiming;
use purrfect_core::datastore::{SessionHeader, SessionWriter};
use purrfect_core::session::{Condition, SessionPlan, TRAINING_MS};
use purrfect_core::simulate::{simulate_participant, AccuracyModel, Behavior, SpatialModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const STUDY_CONFIG_FILE: &str = "study.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub participants: usize,
    pub behavior: Behavior,
    /// Between-participant SD of accuracy on the logit scale.
    pub logit_sd: f64,
    /// Between-participant SD of the mean response time, seconds.
    pub rt_sd_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seed: u64,
    pub audio: GroupSpec,
    pub haptic: GroupSpec,
    pub timing: StimulusTiming,
    pub training_ms: u64,
}

fn q2_means(pairs: [(&str, f64); 8]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl StudyConfig {
    /// Ten audio-only and eight audio-haptic participants with training
    /// accuracy 0.34 / 0.543. Generating response-time means are set so the
    /// model estimates after the mean + 2 sd trim land near 6.9 s / 5.2 s; the
    /// trim removes more of the slower group's tail.
    pub fn standard(seed: u64) -> Self {
        let base = Behavior {
            training: AccuracyModel::Constant { p: 0.34 },
            pre_accuracy: 0.369,
            post_accuracy: 0.408,
            rt_mean_s: 7.6,
            rt_sd_log: 0.4,
            replay_probability: 0.15,
            spatial: SpatialModel::default(),
            q2_means: q2_means([
                ("mental_load", 5.0),
                ("physical_load", 2.0),
                ("success", 3.5),
                ("ease", 5.0),
                ("frustration", 4.5),
                ("effectiveness", 4.0),
                ("engagement", 4.5),
                ("fun", 4.0),
            ]),
        };
        let haptic = Behavior {
            training: AccuracyModel::Constant { p: 0.543 },
            pre_accuracy: 0.401,
            post_accuracy: 0.444,
            rt_mean_s: 5.35,
            q2_means: q2_means([
                ("mental_load", 4.5),
                ("physical_load", 2.0),
                ("success", 4.0),
                ("ease", 4.5),
                ("frustration", 3.0),
                ("effectiveness", 5.0),
                ("engagement", 5.5),
                ("fun", 5.0),
            ]),
            ..base.clone()
        };
        StudyConfig {
            seed,
            audio: GroupSpec { participants: 10, behavior: base, logit_sd: 0.1, rt_sd_s: 0.15 },
            haptic: GroupSpec { participants: 8, behavior: haptic, logit_sd: 0.1, rt_sd_s: 0.15 },
            timing: StimulusTiming::default(),
            training_ms: TRAINING_MS,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: &str| Err(CliError::Config(m.to_string()));
        if self.audio.participants + self.haptic.participants == 0 {
            return cfg("at least one participant is required");
        }
        for g in [&self.audio, &self.haptic] {
            g.behavior.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if !(g.logit_sd >= 0.0 && g.rt_sd_s >= 0.0) {
                return cfg("between-participant SDs must be non-negative");
            }
        }
        if self.training_ms == 0 {
            return cfg("training_ms must be positive");
        }
        self.timing.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}

fn study_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 8, 9, 0, 0).unwrap()
}

/// Writes one session file per participant (`A01..`, then `H01..`) plus the
/// configuration. The directory must not already hold session files.
pub fn simulate_study(config: &StudyConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    if !purrfect_core::datastore::study_files(dir)?.is_empty() {
        return Err(CliError::Config(format!("{} already contains session files", dir.display())));
    }
    let cfg_path = dir.join(STUDY_CONFIG_FILE);
    let text = serde_json::to_string_pretty(config).expect("config serializes") + "\n";
    std::fs::write(&cfg_path, text).map_err(|e| CliError::io(&cfg_path, e))?;

    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let groups = [("A", Condition::AudioOnly, &config.audio), ("H", Condition::AudioHaptic, &config.haptic)];
    let mut written = Vec::new();
    for (prefix, condition, group) in groups {
        for i in 1..=group.participants {
            let id = format!("{prefix}{i:02}");
            let plan_seed: u64 = master.random();
            let mut rng = ChaCha8Rng::seed_from_u64(master.random());
            let behavior = group.behavior.individualize(group.logit_sd, group.rt_sd_s, &mut rng);
            let mut plan = SessionPlan::with_training_ms(&id, condition, plan_seed, config.training_ms);
            plan.timing = config.timing;
            let started_at = study_epoch() + Duration::days(written.len() as i64);
            let sim = simulate_participant(&plan, &behavior, &mut rng, started_at)?;
            let header = SessionHeader {
                participant_id: id.clone(),
                condition,
                seed: plan_seed,
                timing: plan.timing,
                software_version: SOFTWARE_VERSION.to_string(),
                started_at,
            };
            let mut w = SessionWriter::create(dir.join(format!("{id}.jsonl")), &header)?;
            for item in &sim.log {
                w.append(item)?;
            }
            written.push(w.finish(started_at + Duration::milliseconds(sim.duration_ms as i64))?);
            tracing::debug!(participant = %id, "session simulated");
        }
    }
    Ok(written)
}
