//! Pre-test versus post-test accuracy and per-interval guess distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::descriptive::{mean, MeanCi};
use crate::error::{Result, StatsError};
use crate::table::{ObservationTable, Phase};
use crate::ttest::{t_test, TTest, TTestKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantPrePost {
    pub participant_id: String,
    pub haptic: u8,
    pub pre: f64,
    pub post: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPrePost {
    pub haptic: u8,
    pub pre: MeanCi,
    pub post: MeanCi,
    pub delta: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrePostResult {
    pub participants: Vec<ParticipantPrePost>,
    /// Index 0 audio-only, index 1 audio-haptic.
    pub groups: [GroupPrePost; 2],
    /// Haptic deltas tested against audio-only deltas.
    pub test: TTest,
}

pub fn pre_post_test(table: &ObservationTable, kind: TTestKind) -> Result<PrePostResult> {
    let mut per: BTreeMap<&str, (u8, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &table.rows {
        let entry = per.entry(&r.participant_id).or_insert((r.haptic, Vec::new(), Vec::new()));
        match r.phase {
            Phase::PreTest => entry.1.push(r.correct as f64),
            Phase::PostTest => entry.2.push(r.correct as f64),
            Phase::Training => {}
        }
    }
    let participants: Vec<ParticipantPrePost> = per
        .into_iter()
        .filter(|(_, (_, pre, post))| !pre.is_empty() && !post.is_empty())
        .map(|(pid, (haptic, pre, post))| {
            let (pre, post) = (mean(&pre), mean(&post));
            ParticipantPrePost { participant_id: pid.to_string(), haptic, pre, post, delta: post - pre }
        })
        .collect();
    let group = |h: u8| -> Result<GroupPrePost> {
        let members: Vec<&ParticipantPrePost> = participants.iter().filter(|p| p.haptic == h).collect();
        if members.len() < 2 {
            return Err(StatsError::InsufficientData(format!(
                "group haptic={h} has {} participants with both tests",
                members.len()
            )));
        }
        let col = |f: fn(&ParticipantPrePost) -> f64| members.iter().map(|p| f(p)).collect::<Vec<_>>();
        Ok(GroupPrePost {
            haptic: h,
            pre: MeanCi::from_sample(&col(|p| p.pre)),
            post: MeanCi::from_sample(&col(|p| p.post)),
            delta: MeanCi::from_sample(&col(|p| p.delta)),
        })
    };
    let groups = [group(0)?, group(1)?];
    let deltas = |h: u8| participants.iter().filter(|p| p.haptic == h).map(|p| p.delta).collect::<Vec<_>>();
    let test = t_test(&deltas(1), &deltas(0), kind)?;
    Ok(PrePostResult { participants, groups, test })
}

/// Response counts indexed `[true degree - 1][response degree - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessDistribution {
    pub haptic: u8,
    pub phase: Phase,
    pub counts: [[u32; 8]; 8],
}

/// One confusion table per group and test phase (audio pre, audio post, haptic pre, haptic post).
pub fn guess_distributions(table: &ObservationTable) -> Vec<GuessDistribution> {
    let mut out = Vec::new();
    for haptic in [0u8, 1] {
        for phase in [Phase::PreTest, Phase::PostTest] {
            let mut counts = [[0u32; 8]; 8];
            for r in table.rows.iter().filter(|r| r.haptic == haptic && r.phase == phase) {
                counts[r.interval_degree as usize - 1][r.response_degree as usize - 1] += 1;
            }
            out.push(GuessDistribution { haptic, phase, counts });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Observation;

    fn rows(pid: &str, haptic: u8, phase: Phase, correct: &[u8]) -> Vec<Observation> {
        correct
            .iter()
            .enumerate()
            .map(|(i, &c)| Observation {
                participant_id: pid.into(),
                haptic,
                trial_number: i as u32 + 1,
                correct: c,
                response_time_s: 3.0,
                phase,
                interval_degree: 2,
                response_degree: if c == 1 { 2 } else { 5 },
            })
            .collect()
    }

    #[test]
    fn no_change_means_zero_t() {
        let mut all = Vec::new();
        for (pid, h, c) in [("a", 0, [1, 0, 1, 1]), ("b", 0, [0, 0, 1, 1]), ("c", 1, [1, 1, 1, 0]), ("d", 1, [0, 1, 0, 0])] {
            all.extend(rows(pid, h, Phase::PreTest, &c));
            all.extend(rows(pid, h, Phase::PostTest, &c));
        }
        let r = pre_post_test(&ObservationTable { rows: all }, TTestKind::Welch).unwrap();
        assert!(r.participants.iter().all(|p| p.delta == 0.0));
        assert_eq!(r.test.t, 0.0);
        assert_eq!(r.test.p_value, 1.0);
    }

    #[test]
    fn one_participant_per_group_is_insufficient() {
        let mut all = rows("a", 0, Phase::PreTest, &[1]);
        all.extend(rows("a", 0, Phase::PostTest, &[1]));
        all.extend(rows("b", 1, Phase::PreTest, &[1]));
        all.extend(rows("b", 1, Phase::PostTest, &[0]));
        assert!(matches!(
            pre_post_test(&ObservationTable { rows: all }, TTestKind::Welch),
            Err(StatsError::InsufficientData(_))
        ));
    }

    #[test]
    fn guess_counts() {
        let t = ObservationTable { rows: rows("a", 1, Phase::PostTest, &[1, 0, 0]) };
        let d = guess_distributions(&t);
        assert_eq!(d.len(), 4);
        let haptic_post = d.iter().find(|g| g.haptic == 1 && g.phase == Phase::PostTest).unwrap();
        assert_eq!(haptic_post.counts[1][1], 1);
        assert_eq!(haptic_post.counts[1][4], 2);
    }
}
