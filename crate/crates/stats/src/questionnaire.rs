//! Post-study workload and experience questionnaire.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::descriptive::BoxStats;
use crate::error::{Result, StatsError};
use crate::ttest::{t_test, TTest, TTestKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Q2Item {
    MentalLoad,
    PhysicalLoad,
    Success,
    Ease,
    Frustration,
    Effectiveness,
    Engagement,
    Fun,
}

impl Q2Item {
    pub const ALL: [Q2Item; 8] = [
        Q2Item::MentalLoad,
        Q2Item::PhysicalLoad,
        Q2Item::Success,
        Q2Item::Ease,
        Q2Item::Frustration,
        Q2Item::Effectiveness,
        Q2Item::Engagement,
        Q2Item::Fun,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Q2Item::MentalLoad => "mental_load",
            Q2Item::PhysicalLoad => "physical_load",
            Q2Item::Success => "success",
            Q2Item::Ease => "ease",
            Q2Item::Frustration => "frustration",
            Q2Item::Effectiveness => "effectiveness",
            Q2Item::Engagement => "engagement",
            Q2Item::Fun => "fun",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.key() == key)
    }

    pub fn label(self) -> &'static str {
        match self {
            Q2Item::MentalLoad => "Mental load",
            Q2Item::PhysicalLoad => "Physical load",
            Q2Item::Success => "Success",
            Q2Item::Ease => "Ease",
            Q2Item::Frustration => "Frustration",
            Q2Item::Effectiveness => "Effectiveness",
            Q2Item::Engagement => "Engagement",
            Q2Item::Fun => "Fun",
        }
    }

    pub fn question(self) -> &'static str {
        match self {
            Q2Item::MentalLoad => "How mentally demanding was the task?",
            Q2Item::PhysicalLoad => "How physically demanding was the task?",
            Q2Item::Success => "How successful were you in accomplishing what you were asked to do?",
            Q2Item::Ease => "How hard did you have to work to accomplish your level of performance?",
            Q2Item::Frustration => "How insecure, discouraged, irritated, stressed, and annoyed were you?",
            Q2Item::Effectiveness => "This was an effective way to learn.",
            Q2Item::Engagement => "This was an engaging experience.",
            Q2Item::Fun => "This was a fun experience.",
        }
    }

    /// Labels of the 1 and 7 scale endpoints.
    pub fn anchors(self) -> (&'static str, &'static str) {
        match self {
            Q2Item::MentalLoad | Q2Item::PhysicalLoad | Q2Item::Ease | Q2Item::Frustration => {
                ("Very low", "Very high")
            }
            Q2Item::Success => ("Failure", "Perfect"),
            Q2Item::Effectiveness | Q2Item::Engagement | Q2Item::Fun => {
                ("Strongly disagree", "Strongly agree")
            }
        }
    }

    /// Items scored so that a higher value is more desirable after `8 - x`.
    pub fn inverted(self) -> bool {
        matches!(self, Q2Item::MentalLoad | Q2Item::PhysicalLoad | Q2Item::Frustration)
    }

    pub fn score(self, raw: i64) -> Result<i64> {
        if !(1..=7).contains(&raw) {
            return Err(StatsError::OutOfScale { item: self.key().to_string(), value: raw });
        }
        Ok(if self.inverted() { 8 - raw } else { raw })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantAnswers {
    pub participant_id: String,
    pub haptic: u8,
    /// Raw 1-7 answers keyed by [`Q2Item::key`].
    pub answers: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub item: Q2Item,
    pub inverted: bool,
    pub audio: Option<BoxStats>,
    pub haptic: Option<BoxStats>,
    /// Haptic scores tested against audio-only scores; absent with fewer than two answers per group.
    pub test: Option<TTest>,
}

pub fn questionnaire_scores(answers: &[ParticipantAnswers], kind: TTestKind) -> Result<Vec<ItemSummary>> {
    let mut scored: BTreeMap<Q2Item, [Vec<f64>; 2]> = BTreeMap::new();
    for p in answers {
        for (key, &raw) in &p.answers {
            let item = Q2Item::from_key(key).ok_or_else(|| StatsError::UnknownItem(key.clone()))?;
            let s = item.score(raw)?;
            scored.entry(item).or_default()[usize::from(p.haptic.min(1))].push(s as f64);
        }
    }
    Q2Item::ALL
        .into_iter()
        .map(|item| {
            let empty = [Vec::new(), Vec::new()];
            let [audio, haptic] = scored.get(&item).unwrap_or(&empty);
            let test = match t_test(haptic, audio, kind) {
                Ok(t) => Some(t),
                Err(StatsError::InsufficientData(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(ItemSummary {
                item,
                inverted: item.inverted(),
                audio: BoxStats::from_sample(audio),
                haptic: BoxStats::from_sample(haptic),
                test,
            })
        })
        .collect()
}
