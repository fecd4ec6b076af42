//! One row per answered interval trial, as consumed by the models.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    PreTest,
    Training,
    PostTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub participant_id: String,
    /// 1 when the participant trained with vibrotactile cues.
    pub haptic: u8,
    /// 1-based position within the phase; training runs on across both sessions.
    pub trial_number: u32,
    pub correct: u8,
    pub response_time_s: f64,
    pub phase: Phase,
    pub interval_degree: u8,
    pub response_degree: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    pub rows: Vec<Observation>,
}

impl ObservationTable {
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        let table = ObservationTable { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.correct > 1 || r.haptic > 1 {
                return Err(StatsError::InvalidTable(format!(
                    "row {i}: correct and haptic must be 0/1"
                )));
            }
            if !r.response_time_s.is_finite() {
                return Err(StatsError::InvalidTable(format!(
                    "row {i}: response time is not finite"
                )));
            }
            if !(1..=8).contains(&r.interval_degree) || !(1..=8).contains(&r.response_degree) {
                return Err(StatsError::InvalidTable(format!(
                    "row {i}: degrees must lie in 1..=8"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn filter_phase(&self, phase: Phase) -> ObservationTable {
        ObservationTable {
            rows: self.rows.iter().filter(|r| r.phase == phase).cloned().collect(),
        }
    }

    /// Participant ids in order of first appearance.
    pub fn participants(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.participant_id.as_str()) {
                seen.push(&r.participant_id);
            }
        }
        seen
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<Observation>, _>>()?;
        Self::new(rows)
    }
}
