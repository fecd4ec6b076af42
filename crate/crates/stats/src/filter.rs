//! Response-time exclusions applied before the response-time model.

use serde::{Deserialize, Serialize};

use crate::descriptive::{mean, std_dev};
use crate::table::ObservationTable;

/// Earliest time (s) at which the second tone could have been heard in full.
pub const RESPONSE_FLOOR_S: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub n_input: usize,
    pub floor_s: f64,
    pub n_below_floor: usize,
    pub mean_after_floor: f64,
    pub sd_after_floor: f64,
    /// `mean + 2 sd` of the rows that survived the floor; absent when fewer
    /// than two rows remain.
    pub threshold_s: Option<f64>,
    pub n_above_threshold: usize,
    pub n_kept: usize,
}

/// Drops rows faster than the floor, then rows slower than `mean + 2 sd` of the remainder.
pub fn filter_response_times(table: &ObservationTable) -> (ObservationTable, FilterReport) {
    let n_input = table.len();
    let floored: Vec<_> = table.rows.iter().filter(|r| r.response_time_s >= RESPONSE_FLOOR_S).collect();
    let times: Vec<f64> = floored.iter().map(|r| r.response_time_s).collect();
    let m = mean(&times);
    let sd = std_dev(&times);
    let threshold = (times.len() >= 2).then_some(m + 2.0 * sd);
    let kept: Vec<_> = floored
        .iter()
        .filter(|r| threshold.is_none_or(|t| r.response_time_s <= t))
        .map(|r| (*r).clone())
        .collect();
    let report = FilterReport {
        n_input,
        floor_s: RESPONSE_FLOOR_S,
        n_below_floor: n_input - floored.len(),
        mean_after_floor: m,
        sd_after_floor: sd,
        threshold_s: threshold,
        n_above_threshold: floored.len() - kept.len(),
        n_kept: kept.len(),
    };
    (ObservationTable { rows: kept }, report)
}
