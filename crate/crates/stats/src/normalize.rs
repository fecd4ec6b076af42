//! Per-participant min-max normalization of free magnitude estimates.

use serde::{Deserialize, Serialize};

use crate::descriptive::BoxStats;
use crate::error::{Result, StatsError};

/// Maps each rating to `(x - min) / (max - min)`.
pub fn normalize_magnitudes(raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = raw.iter().find(|x| !x.is_finite() || **x <= 0.0) {
        return Err(StatsError::InvalidRating(bad));
    }
    if raw.len() < 2 {
        return Err(StatsError::TooFewRatings { needed: 2, got: raw.len() });
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range <= 0.0 {
        return Err(StatsError::DegenerateRatings(raw.len()));
    }
    Ok(raw
        .iter()
        .map(|&x| {
            // Pin the extremes so rounding never leaves them off 0 and 1.
            if x == min {
                0.0
            } else if x == max {
                1.0
            } else {
                (x - min) / range
            }
        })
        .collect())
}

/// One participant's spatial-distance ratings, indexed by target module 1..=8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRatings {
    pub participant_id: String,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    /// Module index of the second vibration; 1 is the zero-distance pair.
    pub distance: u8,
    /// Physical separation mapped onto the same 0-1 scale as the ratings.
    pub ground_truth: f64,
    pub stats: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSummary {
    pub participants: Vec<NormalizedRatings>,
    /// Participants whose ratings were all equal and therefore left out.
    pub excluded: Vec<String>,
    pub by_distance: Vec<DistanceSummary>,
}

/// Normalizes each participant's eight ratings and summarizes them per distance.
///
/// Input ratings are ordered by target module (index 0 = module 1).
pub fn spatial_summary(per_participant: &[(String, Vec<f64>)]) -> Result<SpatialSummary> {
    let mut participants = Vec::new();
    let mut excluded = Vec::new();
    for (pid, raw) in per_participant {
        match normalize_magnitudes(raw) {
            Ok(normalized) => participants.push(NormalizedRatings {
                participant_id: pid.clone(),
                raw: raw.clone(),
                normalized,
            }),
            Err(StatsError::DegenerateRatings(_)) => excluded.push(pid.clone()),
            Err(e) => return Err(e),
        }
    }
    let width = participants.iter().map(|p| p.normalized.len()).max().unwrap_or(8);
    let by_distance = (0..width)
        .map(|i| {
            let column: Vec<f64> = participants
                .iter()
                .filter_map(|p| p.normalized.get(i).copied())
                .collect();
            DistanceSummary {
                distance: (i + 1) as u8,
                ground_truth: if width > 1 { i as f64 / (width - 1) as f64 } else { 0.0 },
                stats: BoxStats::from_sample(&column),
            }
        })
        .collect();
    Ok(SpatialSummary { participants, excluded, by_distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn three_points() {
        assert_eq!(normalize_magnitudes(&[2.0, 5.0, 8.0]).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn one_to_eight_is_sevenths() {
        let raw: Vec<f64> = (1..=8).map(f64::from).collect();
        let n = normalize_magnitudes(&raw).unwrap();
        for (i, v) in n.iter().enumerate() {
            assert_abs_diff_eq!(*v, i as f64 / 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_ratings_are_degenerate() {
        assert!(matches!(
            normalize_magnitudes(&[3.0; 8]),
            Err(StatsError::DegenerateRatings(8))
        ));
    }

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(normalize_magnitudes(&[0.0, 1.0]), Err(StatsError::InvalidRating(_))));
    }

    #[test]
    fn summary_excludes_degenerate_participants() {
        let data = vec![
            ("a".to_string(), (1..=8).map(f64::from).collect()),
            ("b".to_string(), vec![2.0; 8]),
        ];
        let s = spatial_summary(&data).unwrap();
        assert_eq!(s.excluded, vec!["b".to_string()]);
        assert_eq!(s.by_distance.len(), 8);
        assert_abs_diff_eq!(s.by_distance[7].ground_truth, 1.0);
        assert_abs_diff_eq!(s.by_distance[3].stats.unwrap().median, 3.0 / 7.0);
    }

    proptest! {
        #[test]
        fn affine_invariant(raw in prop::collection::vec(0.1f64..100.0, 8), a in 0.01f64..50.0, b in 0.0f64..20.0) {
            prop_assume!(raw.iter().any(|x| (x - raw[0]).abs() > 1e-6));
            let base = normalize_magnitudes(&raw).unwrap();
            let shifted: Vec<f64> = raw.iter().map(|x| a * x + b).collect();
            let moved = normalize_magnitudes(&shifted).unwrap();
            for (x, y) in base.iter().zip(&moved) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
