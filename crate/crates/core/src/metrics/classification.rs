//! Ten-year binary outcome view, operating points, reclassification and
//! enrichment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::clopper_pearson;

/// Ten years, the horizon for every binary metric.
pub const HORIZON_YEARS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    EventWithin,
    EventFree,
    /// Censored before the horizon without an event.
    ExcludedCensored,
}

impl OutcomeStatus {
    pub fn from_followup(time: f64, event: bool, horizon: f64) -> Self {
        if event && time <= horizon {
            OutcomeStatus::EventWithin
        } else if time >= horizon {
            OutcomeStatus::EventFree
        } else {
            OutcomeStatus::ExcludedCensored
        }
    }
}

pub fn binary_outcome(times: &[f64], events: &[bool], horizon: f64) -> Vec<OutcomeStatus> {
    times
        .iter()
        .zip(events)
        .map(|(&t, &e)| OutcomeStatus::from_followup(t, e, horizon))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub threshold: f64,
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
    pub sensitivity: f64,
    pub sensitivity_ci: (f64, f64),
    pub specificity: f64,
    pub specificity_ci: (f64, f64),
}

fn counts(scores: &[f64], threshold: f64, outcome: &[OutcomeStatus]) -> (usize, usize, usize, usize) {
    let (mut tp, mut fn_, mut tn, mut fp) = (0, 0, 0, 0);
    for (&s, &o) in scores.iter().zip(outcome) {
        let flagged = s >= threshold;
        match (o, flagged) {
            (OutcomeStatus::EventWithin, true) => tp += 1,
            (OutcomeStatus::EventWithin, false) => fn_ += 1,
            (OutcomeStatus::EventFree, false) => tn += 1,
            (OutcomeStatus::EventFree, true) => fp += 1,
            (OutcomeStatus::ExcludedCensored, _) => {}
        }
    }
    (tp, fn_, tn, fp)
}

fn check_pair(scores: &[f64], outcome: &[OutcomeStatus]) -> Result<()> {
    if scores.len() != outcome.len() {
        return Err(Error::invalid("scores and outcomes differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    Ok(())
}

/// Sensitivity and specificity of `score >= threshold`, with exact
/// binomial intervals at level `1 - alpha`.
pub fn binary_confusion(scores: &[f64], threshold: f64, outcome: &[OutcomeStatus], alpha: f64) -> Result<Confusion> {
    check_pair(scores, outcome)?;
    let (tp, fn_, tn, fp) = counts(scores, threshold, outcome);
    if tp + fn_ == 0 {
        return Err(Error::invalid("no events within the horizon"));
    }
    if tn + fp == 0 {
        return Err(Error::invalid("no event-free subjects at the horizon"));
    }
    Ok(Confusion {
        threshold,
        tp,
        fn_,
        tn,
        fp,
        sensitivity: tp as f64 / (tp + fn_) as f64,
        sensitivity_ci: clopper_pearson(tp, tp + fn_, alpha),
        specificity: tn as f64 / (tn + fp) as f64,
        specificity_ci: clopper_pearson(tn, tn + fp, alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "target")]
pub enum OperatingTarget {
    /// Largest threshold whose sensitivity reaches the target.
    MatchSensitivity(f64),
    /// Smallest threshold whose specificity reaches the target.
    MatchSpecificity(f64),
    FixedRisk(f64),
}

/// Candidate cuts are every distinct score plus `+inf` (flag nobody).
/// Flagging is `score >= threshold`, so sensitivity falls and specificity
/// rises as the threshold increases.
pub fn match_operating_point(scores: &[f64], outcome: &[OutcomeStatus], target: OperatingTarget) -> Result<f64> {
    check_pair(scores, outcome)?;
    let goal = match target {
        OperatingTarget::FixedRisk(t) => return Ok(t),
        OperatingTarget::MatchSensitivity(g) | OperatingTarget::MatchSpecificity(g) => g,
    };
    let mut pts: Vec<(f64, OutcomeStatus)> = scores
        .iter()
        .zip(outcome)
        .filter(|(_, o)| **o != OutcomeStatus::ExcludedCensored)
        .map(|(&s, &o)| (s, o))
        .collect();
    let pos = pts.iter().filter(|p| p.1 == OutcomeStatus::EventWithin).count();
    let neg = pts.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("operating point needs events and event-free subjects"));
    }
    if !(0.0..=1.0).contains(&goal) {
        return Err(Error::invalid(format!(
            "target {goal} is unreachable; achievable sensitivity and specificity lie in [0, 1]"
        )));
    }
    // Sweep thresholds from +inf downwards over distinct scores.
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut frontier = vec![(f64::INFINITY, 0usize, neg)];
    let (mut tp, mut tn) = (0usize, neg);
    let mut k = 0;
    while k < pts.len() {
        let s = pts[k].0;
        while k < pts.len() && pts[k].0 == s {
            match pts[k].1 {
                OutcomeStatus::EventWithin => tp += 1,
                _ => tn -= 1,
            }
            k += 1;
        }
        frontier.push((s, tp, tn));
    }
    let sens = |tp: usize| tp as f64 / pos as f64;
    let spec = |tn: usize| tn as f64 / neg as f64;
    let found = match target {
        OperatingTarget::MatchSpecificity(_) => frontier
            .iter()
            .rev()
            .find(|&&(_, _, tn)| spec(tn) >= goal),
        _ => frontier.iter().find(|&&(_, tp, _)| sens(tp) >= goal),
    };
    found.map(|f| f.0).ok_or_else(|| {
        let (best_sens, best_spec) = frontier
            .iter()
            .map(|&(_, tp, tn)| (sens(tp), spec(tn)))
            .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        Error::invalid(format!(
            "target {goal} is unreachable; best sensitivity {best_sens}, best specificity {best_spec}"
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nri {
    pub nri: f64,
    pub event: f64,
    pub nonevent: f64,
}

fn tally(new: &[f64], old: &[f64], outcome: &[OutcomeStatus], up: impl Fn(usize) -> i8) -> Result<Nri> {
    if new.len() != old.len() || new.len() != outcome.len() {
        return Err(Error::invalid("score sets and outcomes differ in length"));
    }
    let (mut ne, mut nn) = (0i64, 0i64);
    let (mut se, mut sn) = (0i64, 0i64);
    for (i, o) in outcome.iter().enumerate() {
        match o {
            OutcomeStatus::EventWithin => {
                ne += 1;
                se += up(i) as i64;
            }
            OutcomeStatus::EventFree => {
                nn += 1;
                sn -= up(i) as i64;
            }
            OutcomeStatus::ExcludedCensored => {}
        }
    }
    if ne == 0 || nn == 0 {
        return Err(Error::invalid("reclassification needs events and event-free subjects"));
    }
    let event = se as f64 / ne as f64;
    let nonevent = sn as f64 / nn as f64;
    Ok(Nri {
        nri: event + nonevent,
        event,
        nonevent,
    })
}

/// Two-category NRI: each model flags `score >= its threshold`.
pub fn nri_categorical(
    new: &[f64],
    old: &[f64],
    threshold_new: f64,
    threshold_old: f64,
    outcome: &[OutcomeStatus],
) -> Result<Nri> {
    tally(new, old, outcome, |i| {
        (new[i] >= threshold_new) as i8 - (old[i] >= threshold_old) as i8
    })
}

/// Category-free NRI: any increase is "up", ties move nobody.
pub fn nri_category_free(new: &[f64], old: &[f64], outcome: &[OutcomeStatus]) -> Result<Nri> {
    tally(new, old, outcome, |i| (new[i] > old[i]) as i8 - (new[i] < old[i]) as i8)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Enrichment {
    pub fraction: f64,
    /// Share of subjects actually in the top group once ties at the cut
    /// are included.
    pub effective_fraction: f64,
    pub n_top: usize,
    pub fold: f64,
}

pub const ENRICHMENT_FRACTIONS: [f64; 3] = [0.20, 0.10, 0.05];

/// Event prevalence among the highest-scoring fraction relative to overall
/// prevalence, on subjects with a known ten-year status.
pub fn enrichment(scores: &[f64], outcome: &[OutcomeStatus], fractions: &[f64]) -> Result<Vec<Enrichment>> {
    check_pair(scores, outcome)?;
    let mut pts: Vec<(f64, bool)> = scores
        .iter()
        .zip(outcome)
        .filter(|(_, o)| **o != OutcomeStatus::ExcludedCensored)
        .map(|(&s, &o)| (s, o == OutcomeStatus::EventWithin))
        .collect();
    let n = pts.len();
    let events = pts.iter().filter(|p| p.1).count();
    if events == 0 {
        return Err(Error::invalid("zero overall prevalence"));
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid(format!("top fraction {f} outside (0, 1]")));
            }
            let k = ((f * n as f64).ceil() as usize).clamp(1, n);
            let cut = pts[k - 1].0;
            let n_top = pts.partition_point(|p| p.0 >= cut);
            let e_top = pts[..n_top].iter().filter(|p| p.1).count();
            Ok(Enrichment {
                fraction: f,
                effective_fraction: n_top as f64 / n as f64,
                n_top,
                fold: (e_top as f64 * n as f64) / (n_top as f64 * events as f64),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use OutcomeStatus::*;

    #[test]
    fn outcome_view_rules() {
        assert_eq!(OutcomeStatus::from_followup(3.0, true, 10.0), EventWithin);
        assert_eq!(OutcomeStatus::from_followup(5.0, false, 10.0), ExcludedCensored);
        assert_eq!(OutcomeStatus::from_followup(10.0, false, 10.0), EventFree);
        assert_eq!(OutcomeStatus::from_followup(12.0, true, 10.0), EventFree);
    }

    #[test]
    fn censored_subject_is_dropped() {
        let outcome = [EventWithin, EventFree, ExcludedCensored];
        let c = binary_confusion(&[0.9, 0.1, 0.9], 0.5, &outcome, 0.05).unwrap();
        assert_eq!((c.tp, c.fn_, c.tn, c.fp), (1, 0, 1, 0));
    }

    #[test]
    fn degenerate_sensitivity_interval_matches_closed_form() {
        let outcome: Vec<_> = (0..20).map(|i| if i < 10 { EventWithin } else { EventFree }).collect();
        let c = binary_confusion(&[0.0; 20], 0.5, &outcome, 0.05).unwrap();
        assert_eq!(c.sensitivity, 0.0);
        assert_eq!(c.sensitivity_ci.0, 0.0);
        assert!((c.sensitivity_ci.1 - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-10);
        assert!((c.specificity_ci.0 - 0.025f64.powf(0.1)).abs() < 1e-10);
    }

    #[test]
    fn perfect_separation_gives_full_sensitivity() {
        let outcome = [EventWithin, EventWithin, EventFree, EventFree, EventFree];
        let s = [0.9, 0.8, 0.3, 0.2, 0.1];
        for target in [0.5, 0.9, 1.0] {
            let t = match_operating_point(&s, &outcome, OperatingTarget::MatchSpecificity(target)).unwrap();
            let c = binary_confusion(&s, t, &outcome, 0.05).unwrap();
            assert_eq!(c.sensitivity, 1.0);
        }
    }

    #[test]
    fn fixed_risk_is_returned_directly() {
        let t = match_operating_point(&[0.2, 0.3], &[EventWithin, EventFree], OperatingTarget::FixedRisk(0.1));
        assert_eq!(t.unwrap(), 0.1);
    }

    #[test]
    fn unreachable_target_names_the_frontier() {
        let e = match_operating_point(&[0.2, 0.3], &[EventWithin, EventFree], OperatingTarget::MatchSpecificity(1.5))
            .unwrap_err();
        assert!(e.to_string().contains("unreachable"));
    }

    #[test]
    fn identical_scores_do_not_reclassify() {
        let s = [0.1, 0.5, 0.3, 0.7];
        let o = [EventWithin, EventFree, EventWithin, EventFree];
        let n = nri_categorical(&s, &s, 0.4, 0.4, &o).unwrap();
        assert_eq!((n.nri, n.event, n.nonevent), (0.0, 0.0, 0.0));
        let n = nri_category_free(&s, &s, &o).unwrap();
        assert_eq!((n.nri, n.event, n.nonevent), (0.0, 0.0, 0.0));
    }

    #[test]
    fn perfect_reclassification() {
        let o = [EventWithin, EventWithin, EventFree, EventFree];
        let old = [0.0, 0.0, 1.0, 1.0];
        let new = [1.0, 1.0, 0.0, 0.0];
        let n = nri_categorical(&new, &old, 0.5, 0.5, &o).unwrap();
        assert_eq!((n.event, n.nonevent, n.nri), (1.0, 1.0, 2.0));
    }

    #[test]
    fn ten_subject_hand_table() {
        // Events (first 4): up, up, stay, down. Non-events (last 5): down,
        // stay, stay, up, down. Subject 5 is censored and ignored.
        let old = [0.1, 0.2, 0.6, 0.7, 0.3, 0.8, 0.1, 0.2, 0.1, 0.9];
        let new = [0.6, 0.7, 0.8, 0.2, 0.9, 0.1, 0.2, 0.3, 0.9, 0.4];
        let o = [
            EventWithin,
            EventWithin,
            EventWithin,
            EventWithin,
            ExcludedCensored,
            EventFree,
            EventFree,
            EventFree,
            EventFree,
            EventFree,
        ];
        let n = nri_categorical(&new, &old, 0.5, 0.5, &o).unwrap();
        assert!((n.event - 0.25).abs() < 1e-15);
        assert!((n.nonevent - 0.2).abs() < 1e-15);
    }

    #[test]
    fn uniform_shift_cancels_in_category_free() {
        let old = [0.1, 0.4, 0.3, 0.8];
        let new: Vec<f64> = old.iter().map(|v| v + 0.05).collect();
        let o = [EventWithin, EventFree, EventWithin, EventFree];
        let n = nri_category_free(&new, &old, &o).unwrap();
        assert_eq!((n.event, n.nonevent, n.nri), (1.0, -1.0, 0.0));
    }

    #[test]
    fn perfect_score_enrichment() {
        // 10 events out of 100; top 5% are all events.
        let o: Vec<_> = (0..100).map(|i| if i < 10 { EventWithin } else { EventFree }).collect();
        let s: Vec<f64> = o.iter().map(|x| (*x == EventWithin) as u8 as f64).collect();
        let e = enrichment(&s, &o, &[0.05, 1.0]).unwrap();
        // Ties at the cut pull in all 10 events.
        assert_eq!(e[0].n_top, 10);
        assert!((e[0].fold - 10.0).abs() < 1e-12);
        assert_eq!(e[1].fold, 1.0);
    }
}
