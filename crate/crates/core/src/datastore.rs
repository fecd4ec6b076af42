//! Append-only JSON-lines session files and loading them for analysis.
//!
//! Each line carries a `kind` tag: one `header`, then `record` and
//! `questionnaire` lines in session order, then an optional `end`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::StimulusTiming;
use crate::session::{Condition, PhaseKind, QuestionnaireId, TrialRecord};
use crate::simulate::LogItem;
use purrfect_stats::{Observation, ObservationTable, ParticipantAnswers, Phase};

pub const SESSION_EXTENSION: &str = "jsonl";

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("storage failure on {path}: {source}")]
    StorageFailure { path: PathBuf, source: std::io::Error },
    #[error("validation failed: {0}")]
    ValidationError(String),
    #[error("{path}:{line}: {message}")]
    ParseError { path: PathBuf, line: usize, message: String },
    #[error("participant {0} appears in more than one session file")]
    DuplicateParticipant(String),
    #[error("no session files given")]
    EmptyDataset,
    #[error(transparent)]
    Table(#[from] purrfect_stats::StatsError),
}

pub type Result<T> = std::result::Result<T, DatastoreError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub participant_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub timing: StimulusTiming,
    pub software_version: String,
    pub started_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireEntry {
    pub id: QuestionnaireId,
    pub answers: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEnd {
    pub finished_at: DateTime<Utc>,
    pub record_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(SessionHeader),
    Record(TrialRecord),
    Questionnaire(QuestionnaireEntry),
    End(SessionEnd),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionFile {
    pub path: PathBuf,
    pub header: SessionHeader,
    pub records: Vec<TrialRecord>,
    pub questionnaires: Vec<QuestionnaireEntry>,
    pub end: Option<SessionEnd>,
}

impl SessionFile {
    pub fn questionnaire(&self, id: QuestionnaireId) -> Option<&QuestionnaireEntry> {
        self.questionnaires.iter().rev().find(|q| q.id == id)
    }
}

/// One writer per session file. Every line is flushed and synced before the
/// call returns, so a crash loses at most the line being written.
pub struct SessionWriter {
    path: PathBuf,
    out: BufWriter<File>,
    records: usize,
}

impl SessionWriter {
    /// Creates a new file; refuses to overwrite an existing one.
    pub fn create(path: impl AsRef<Path>, header: &SessionHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|source| DatastoreError::StorageFailure { path: path.clone(), source })?;
        let mut w = SessionWriter { path, out: BufWriter::new(file), records: 0 };
        w.write_line(&Line::Header(header.clone()))?;
        Ok(w)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append_record(&mut self, record: &TrialRecord) -> Result<()> {
        record.validate().map_err(|e| DatastoreError::ValidationError(e.to_string()))?;
        self.write_line(&Line::Record(record.clone()))?;
        self.records += 1;
        Ok(())
    }

    pub fn append_questionnaire(&mut self, id: QuestionnaireId, answers: &BTreeMap<String, serde_json::Value>) -> Result<()> {
        self.write_line(&Line::Questionnaire(QuestionnaireEntry { id, answers: answers.clone() }))
    }

    pub fn append(&mut self, item: &LogItem) -> Result<()> {
        match item {
            LogItem::Record(r) => self.append_record(r),
            LogItem::Questionnaire { id, answers } => self.append_questionnaire(*id, answers),
        }
    }

    pub fn finish(mut self, finished_at: DateTime<Utc>) -> Result<PathBuf> {
        let end = SessionEnd { finished_at, record_count: self.records };
        self.write_line(&Line::End(end))?;
        Ok(self.path)
    }

    fn write_line(&mut self, line: &Line) -> Result<()> {
        let storage = |source| DatastoreError::StorageFailure { path: self.path.clone(), source };
        let text = serde_json::to_string(line).expect("session lines serialize");
        self.out.write_all(text.as_bytes()).map_err(storage)?;
        self.out.write_all(b"\n").map_err(storage)?;
        self.out.flush().map_err(storage)?;
        self.out.get_ref().sync_data().map_err(storage)
    }
}

pub fn read_session(path: impl AsRef<Path>) -> Result<SessionFile> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|source| DatastoreError::StorageFailure { path: path.clone(), source })?;
    let parse_err = |line: usize, message: String| DatastoreError::ParseError { path: path.clone(), line, message };
    let mut header = None;
    let mut records = Vec::new();
    let mut questionnaires = Vec::new();
    let mut end = None;
    for (i, text) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let text = text.map_err(|source| DatastoreError::StorageFailure { path: path.clone(), source })?;
        if text.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(&text).map_err(|e| parse_err(n, e.to_string()))?;
        if end.is_some() {
            return Err(parse_err(n, "content after the end line".into()));
        }
        match line {
            Line::Header(h) if header.is_none() => header = Some(h),
            Line::Header(_) => return Err(parse_err(n, "second header".into())),
            _ if header.is_none() => return Err(parse_err(n, "header must come first".into())),
            Line::Record(r) => {
                r.validate().map_err(|e| parse_err(n, e.to_string()))?;
                if r.participant_id != header.as_ref().unwrap().participant_id {
                    return Err(parse_err(n, "record belongs to another participant".into()));
                }
                records.push(r);
            }
            Line::Questionnaire(q) => questionnaires.push(q),
            Line::End(e) => end = Some(e),
        }
    }
    let header = header.ok_or_else(|| parse_err(0, "file has no header".into()))?;
    Ok(SessionFile { path, header, records, questionnaires, end })
}

/// Session files in a study directory, sorted by name.
pub fn study_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let storage = |source| DatastoreError::StorageFailure { path: dir.to_path_buf(), source };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(storage)? {
        let p = entry.map_err(storage)?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == SESSION_EXTENSION) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_sessions<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<SessionFile>> {
    if paths.is_empty() {
        return Err(DatastoreError::EmptyDataset);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let s = read_session(p)?;
        if !seen.insert(s.header.participant_id.clone()) {
            return Err(DatastoreError::DuplicateParticipant(s.header.participant_id));
        }
        out.push(s);
    }
    Ok(out)
}

/// Interval trials as model rows. Training trials are numbered from 1 and run
/// on across both blocks; test trials are numbered within their phase.
pub fn observations(sessions: &[SessionFile]) -> Result<ObservationTable> {
    let mut rows = Vec::new();
    for s in sessions {
        let haptic = u8::from(s.header.condition.is_haptic());
        let mut training = 0u32;
        for r in &s.records {
            let phase = match r.phase {
                PhaseKind::PreTest => Phase::PreTest,
                PhaseKind::Training => Phase::Training,
                PhaseKind::PostTest => Phase::PostTest,
                _ => continue,
            };
            let trial_number = if phase == Phase::Training {
                training += 1;
                training
            } else {
                r.trial_index + 1
            };
            rows.push(Observation {
                participant_id: r.participant_id.clone(),
                haptic,
                trial_number,
                correct: u8::from(r.correct == Some(true)),
                response_time_s: r.response_time_ms / 1000.0,
                phase,
                interval_degree: r.interval_degree,
                response_degree: r.response_degree.expect("validated interval record"),
            });
        }
    }
    Ok(ObservationTable::new(rows)?)
}

pub fn load_dataset<P: AsRef<Path>>(paths: &[P]) -> Result<ObservationTable> {
    observations(&load_sessions(paths)?)
}

/// Spatial-task magnitudes per haptic participant, ordered by target module.
/// Participants without a complete set of eight answers are skipped.
pub fn spatial_ratings(sessions: &[SessionFile]) -> Vec<(String, Vec<f64>)> {
    sessions
        .iter()
        .filter_map(|s| {
            let mut pairs: Vec<(u8, f64)> = s
                .records
                .iter()
                .filter(|r| r.phase == PhaseKind::SpatialTest)
                .filter_map(|r| Some((r.interval_degree, r.spatial_response?)))
                .collect();
            pairs.sort_by_key(|p| p.0);
            let complete = pairs.iter().map(|p| p.0).eq(1..=8);
            complete.then(|| (s.header.participant_id.clone(), pairs.into_iter().map(|p| p.1).collect()))
        })
        .collect()
}

/// Q2 answers with integer values, for scoring.
pub fn q2_answers(sessions: &[SessionFile]) -> Vec<ParticipantAnswers> {
    sessions
        .iter()
        .filter_map(|s| {
            let q = s.questionnaire(QuestionnaireId::Q2)?;
            let answers = q.answers.iter().filter_map(|(k, v)| Some((k.clone(), v.as_i64()?))).collect();
            Some(ParticipantAnswers {
                participant_id: s.header.participant_id.clone(),
                haptic: u8::from(s.header.condition.is_haptic()),
                answers,
            })
        })
        .collect()
}
