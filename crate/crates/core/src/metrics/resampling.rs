//! Bootstrap intervals, paired permutation tests and one-sided Wald tests.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::concordance::harrell_c;
use crate::error::{Error, Result};
use crate::rng::{keyed, stream};
use crate::stats::{normal_sf, quantile_sorted, sample_sd};

/// Failed resamples are redrawn at most this many times.
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    LogRank,
    PermutationNoninferiority,
    PermutationSuperiority,
    WaldOneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    pub statistic: f64,
    pub p_value: f64,
    pub margin: f64,
    pub n_resamples: usize,
    pub seed: u64,
    /// Standard deviation of the resampled null, when there is one.
    pub null_sd: Option<f64>,
    /// Variance or standard error was zero.
    pub degenerate: bool,
    /// Fewer than 100 resamples.
    pub few_resamples: bool,
}

impl TestResult {
    pub fn new(method: TestMethod, statistic: f64, p_value: f64) -> Self {
        TestResult {
            method,
            statistic,
            p_value,
            margin: 0.0,
            n_resamples: 0,
            seed: 0,
            null_sd: None,
            degenerate: false,
            few_resamples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Standard deviation of the replicates.
    pub se: f64,
    pub replicates: Vec<f64>,
}

/// Subject-level percentile bootstrap.
///
/// `metric` receives the resampled subject indices. Iteration `i` draws
/// from a generator keyed by `(seed, i, attempt)`, so the result does not
/// depend on scheduling. A resample on which the metric fails is redrawn up
/// to [`MAX_REDRAWS`] times.
pub fn bootstrap_ci<F>(n_subjects: usize, metric: F, iterations: usize, seed: u64) -> Result<BootstrapCi>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if n_subjects == 0 || iterations == 0 {
        return Err(Error::invalid("bootstrap needs subjects and iterations"));
    }
    let all: Vec<usize> = (0..n_subjects).collect();
    let point = metric(&all)?;
    let replicates: Vec<f64> = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let mut idx = vec![0usize; n_subjects];
            let mut last = None;
            for attempt in 0..=MAX_REDRAWS {
                let mut rng = keyed(&[seed, stream::BOOTSTRAP, i as u64, attempt as u64]);
                for v in idx.iter_mut() {
                    *v = rng.random_range(0..n_subjects);
                }
                match metric(&idx) {
                    Ok(v) if v.is_finite() => return Ok(v),
                    Ok(v) => last = Some(Error::numerical(format!("metric returned {v}"))),
                    Err(e) => last = Some(e),
                }
            }
            Err(Error::numerical(format!(
                "bootstrap iteration {i} failed after {MAX_REDRAWS} redraws: {}",
                last.expect("at least one attempt")
            )))
        })
        .collect::<Result<_>>()?;
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        point,
        lo: quantile_sorted(&sorted, 0.025),
        hi: quantile_sorted(&sorted, 0.975),
        se: if replicates.len() > 1 { sample_sd(&replicates) } else { 0.0 },
        replicates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    Noninferiority,
    Superiority,
}

/// Paired permutation test on the difference in Harrell's C.
///
/// Each permutation swaps every subject's pair of scores with probability
/// one half. Non-inferiority p is the share of permuted differences at or
/// above `observed + margin`; superiority is the same with margin 0.
#[allow(clippy::too_many_arguments)]
pub fn perm_test_cstat(
    new_scores: &[f64],
    ref_scores: &[f64],
    times: &[f64],
    events: &[bool],
    margin: f64,
    mode: PermutationMode,
    iterations: usize,
    seed: u64,
) -> Result<TestResult> {
    if new_scores.len() != ref_scores.len() {
        return Err(Error::invalid("paired score sets differ in length"));
    }
    if !(margin >= 0.0) {
        return Err(Error::invalid("margin must be non-negative"));
    }
    if iterations == 0 {
        return Err(Error::invalid("permutation test needs at least one iteration"));
    }
    let observed = harrell_c(new_scores, times, events)? - harrell_c(ref_scores, times, events)?;
    let margin = match mode {
        PermutationMode::Noninferiority => margin,
        PermutationMode::Superiority => 0.0,
    };
    let null: Vec<f64> = (0..iterations)
        .into_par_iter()
        .map(|k| {
            let mut rng = keyed(&[seed, stream::PERMUTATION, k as u64]);
            let mut a = new_scores.to_vec();
            let mut b = ref_scores.to_vec();
            for i in 0..a.len() {
                if rng.random::<bool>() {
                    std::mem::swap(&mut a[i], &mut b[i]);
                }
            }
            Ok(harrell_c(&a, times, events)? - harrell_c(&b, times, events)?)
        })
        .collect::<Result<_>>()?;
    let cut = observed + margin;
    let exceed = null.iter().filter(|&&d| d >= cut).count();
    let method = match mode {
        PermutationMode::Noninferiority => TestMethod::PermutationNoninferiority,
        PermutationMode::Superiority => TestMethod::PermutationSuperiority,
    };
    Ok(TestResult {
        margin,
        n_resamples: iterations,
        seed,
        null_sd: Some(if null.len() > 1 { sample_sd(&null) } else { 0.0 }),
        few_resamples: iterations < 100,
        ..TestResult::new(method, observed, exceed as f64 / iterations as f64)
    })
}

/// One-sided Wald test of `H0: delta <= -margin`.
pub fn wald_one_sided(delta: f64, se: f64, margin: f64) -> TestResult {
    let shifted = delta + margin;
    if se > 0.0 {
        let z = shifted / se;
        TestResult {
            margin,
            ..TestResult::new(TestMethod::WaldOneSided, z, normal_sf(z))
        }
    } else {
        TestResult {
            margin,
            degenerate: true,
            ..TestResult::new(TestMethod::WaldOneSided, 0.0, if shifted > 0.0 { 0.0 } else { 1.0 })
        }
    }
}
