//! Decile calibration of predicted ten-year risk.

use serde::{Deserialize, Serialize};

use super::curves::km_curve;
use crate::error::{Error, Result};
use crate::stats::{ols, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedRate {
    /// `1 - S(horizon)` from a Kaplan-Meier curve within the bin.
    #[default]
    KaplanMeier,
    /// Share of the bin with an event by the horizon, ignoring censoring.
    RawProportion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub count: usize,
    pub min_score: f64,
    pub max_score: f64,
    pub mean_predicted: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub bins: Vec<CalibrationBin>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub mean_abs_error: f64,
    /// Some requested bins were empty because of tied scores and were
    /// merged into a neighbour.
    pub merged: bool,
    /// Fewer than two distinct bin means, so no regression line.
    pub degenerate: bool,
}

/// Bins subjects by predicted-risk quantile and compares mean prediction
/// with the observed event probability at `horizon` in each bin.
///
/// Bin edges are the `k / bins` sample quantiles; a score equal to an edge
/// goes to the lower bin.
pub fn calibration(
    scores: &[f64],
    times: &[f64],
    events: &[bool],
    horizon: f64,
    bins: usize,
    mode: ObservedRate,
) -> Result<CalibrationTable> {
    let n = scores.len();
    if times.len() != n || events.len() != n {
        return Err(Error::invalid("scores, times and events differ in length"));
    }
    if bins == 0 || n < bins {
        return Err(Error::invalid(format!("calibration needs at least {bins} subjects, got {n}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("non-finite predicted risk"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins)
        .map(|k| quantile_sorted(&sorted, k as f64 / bins as f64))
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, &s) in scores.iter().enumerate() {
        members[edges.partition_point(|&e| e < s)].push(i);
    }
    let merged = members.iter().any(Vec::is_empty);

    let table: Vec<CalibrationBin> = members
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let s: Vec<f64> = m.iter().map(|&i| scores[i]).collect();
            let t: Vec<f64> = m.iter().map(|&i| times[i]).collect();
            let e: Vec<bool> = m.iter().map(|&i| events[i]).collect();
            let observed = match mode {
                ObservedRate::KaplanMeier => 1.0 - km_curve(&t, &e).survival_at(horizon),
                ObservedRate::RawProportion => {
                    t.iter().zip(&e).filter(|(&t, &e)| e && t <= horizon).count() as f64 / m.len() as f64
                }
            };
            CalibrationBin {
                count: m.len(),
                min_score: s.iter().copied().fold(f64::INFINITY, f64::min),
                max_score: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_predicted: s.iter().sum::<f64>() / s.len() as f64,
                observed,
            }
        })
        .collect();

    let x: Vec<f64> = table.iter().map(|b| b.mean_predicted).collect();
    let y: Vec<f64> = table.iter().map(|b| b.observed).collect();
    let line = if table.len() >= 2 { ols(&x, &y) } else { None };
    let mean_abs_error = x.iter().zip(&y).map(|(p, o)| (o - p).abs()).sum::<f64>() / table.len() as f64;
    Ok(CalibrationTable {
        degenerate: line.is_none(),
        slope: line.map(|l| l.0),
        intercept: line.map(|l| l.1),
        bins: table,
        mean_abs_error,
        merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_sum_to_cohort_size() {
        let s: Vec<f64> = (0..97).map(|i| ((i * 37) % 97) as f64 / 97.0).collect();
        let t = vec![20.0; 97];
        let e = vec![false; 97];
        let c = calibration(&s, &t, &e, 10.0, 10, ObservedRate::KaplanMeier).unwrap();
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), 97);
        assert_eq!(c.bins.len(), 10);
        assert!(!c.merged);
    }

    #[test]
    fn identical_scores_collapse_to_one_flagged_bin() {
        let c = calibration(&[0.2; 30], &[5.0; 30], &[true; 30], 10.0, 10, ObservedRate::KaplanMeier).unwrap();
        assert_eq!(c.bins.len(), 1);
        assert!(c.merged && c.degenerate);
        assert!(c.slope.is_none());
    }

    #[test]
    fn uncensored_bins_equal_raw_proportions() {
        let n = 200;
        let s: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let t: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 23) as f64).collect();
        let e = vec![true; n];
        let km = calibration(&s, &t, &e, 10.0, 10, ObservedRate::KaplanMeier).unwrap();
        let raw = calibration(&s, &t, &e, 10.0, 10, ObservedRate::RawProportion).unwrap();
        for (a, b) in km.bins.iter().zip(&raw.bins) {
            assert!((a.observed - b.observed).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_subjects_is_an_error() {
        assert!(calibration(&[0.1; 5], &[1.0; 5], &[true; 5], 10.0, 10, ObservedRate::KaplanMeier).is_err());
    }
}
