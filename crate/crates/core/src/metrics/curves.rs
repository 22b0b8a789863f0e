//! Kaplan-Meier curves and the two-group log-rank test.

use serde::{Deserialize, Serialize};

use super::TestResult;
use crate::error::{Error, Result};
use crate::stats::chi_square_sf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    /// Survival just after `time`.
    pub survival: f64,
}

/// Product-limit estimate with one step per distinct observed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub steps: Vec<KmStep>,
}

impl KmCurve {
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.steps.partition_point(|s| s.time <= t) {
            0 => 1.0,
            k => self.steps[k - 1].survival,
        }
    }

    /// `(time, survival)` pairs at event times only.
    pub fn event_steps(&self) -> Vec<(f64, f64)> {
        self.steps
            .iter()
            .filter(|s| s.events > 0)
            .map(|s| (s.time, s.survival))
            .collect()
    }
}

pub fn km_curve(times: &[f64], events: &[bool]) -> KmCurve {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk = times.len();
    let mut s = 1.0;
    let mut steps = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let (mut d, mut c) = (0, 0);
        while k < order.len() && times[order[k]] == t {
            if events[order[k]] {
                d += 1;
            } else {
                c += 1;
            }
            k += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
        }
        steps.push(KmStep {
            time: t,
            at_risk,
            events: d,
            censored: c,
            survival: s,
        });
        at_risk -= d + c;
    }
    KmCurve { steps }
}

/// Observed-minus-expected events in group A and its hypergeometric
/// variance, summed over the pooled distinct event times.
pub fn log_rank_sums(a: (&[f64], &[bool]), b: (&[f64], &[bool])) -> (f64, f64) {
    let mut pooled: Vec<(f64, bool, bool)> = Vec::with_capacity(a.0.len() + b.0.len());
    pooled.extend(a.0.iter().zip(a.1).map(|(&t, &e)| (t, e, true)));
    pooled.extend(b.0.iter().zip(b.1).map(|(&t, &e)| (t, e, false)));
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut na, mut nb) = (a.0.len() as f64, b.0.len() as f64);
    let (mut o_minus_e, mut var) = (0.0, 0.0);
    let mut k = 0;
    while k < pooled.len() {
        let t = pooled[k].0;
        let (mut da, mut db, mut ra, mut rb) = (0.0, 0.0, 0.0, 0.0);
        while k < pooled.len() && pooled[k].0 == t {
            let (_, e, in_a) = pooled[k];
            match (in_a, e) {
                (true, true) => da += 1.0,
                (false, true) => db += 1.0,
                _ => {}
            }
            if in_a {
                ra += 1.0;
            } else {
                rb += 1.0;
            }
            k += 1;
        }
        let d = da + db;
        let n = na + nb;
        if d > 0.0 {
            o_minus_e += da - d * na / n;
            if n > 1.0 {
                var += d * (na / n) * (nb / n) * (n - d) / (n - 1.0);
            }
        }
        na -= ra;
        nb -= rb;
    }
    (o_minus_e, var)
}

/// Two-group log-rank chi-square with one degree of freedom.
pub fn log_rank(a: (&[f64], &[bool]), b: (&[f64], &[bool])) -> Result<TestResult> {
    if a.0.is_empty() || b.0.is_empty() {
        return Err(Error::invalid("log-rank needs two nonempty groups"));
    }
    if a.0.len() != a.1.len() || b.0.len() != b.1.len() {
        return Err(Error::invalid("times and events differ in length"));
    }
    let (o_minus_e, var) = log_rank_sums(a, b);
    let (statistic, degenerate) = if var > 0.0 {
        (o_minus_e * o_minus_e / var, false)
    } else {
        (0.0, true)
    };
    Ok(TestResult {
        degenerate,
        ..TestResult::new(super::TestMethod::LogRank, statistic, chi_square_sf(statistic, 1.0))
    })
}
