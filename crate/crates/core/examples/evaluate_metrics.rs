// Discrimination, survival curves, operating points, reclassification,
// calibration and resampling tests on generator-true risks.

use ppgrisk::cohort::{generate_synthetic, SyntheticSpec};
use ppgrisk::metrics::{
    binary_confusion, binary_outcome, bootstrap_ci, calibration, enrichment, harrell_c, km_curve, log_rank,
    match_operating_point, nri_category_free, perm_test_cstat, ObservedRate, OperatingTarget, PermutationMode,
    ENRICHMENT_FRACTIONS,
};
use ppgrisk::Result;

pub fn run_example() -> Result<()> {
    let cohort = generate_synthetic(&SyntheticSpec {
        n_subjects: 3000,
        seed: 4,
        true_coefficients: [("age", 0.8), ("vascular", 0.6)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        ..SyntheticSpec::default()
    })?;
    let n = cohort.rows.len();
    let times: Vec<f64> = cohort.rows.iter().map(|r| r.followup_years()).collect();
    let events: Vec<bool> = cohort.rows.iter().map(|r| r.event).collect();
    let truth: Vec<f64> = (0..n).map(|i| cohort.true_risk(i, 10.0)).collect();
    // A weaker comparator: the generator's risk with the age term alone.
    let age_only: Vec<f64> = cohort
        .rows
        .iter()
        .map(|r| {
            let z = (r.age.unwrap_or(57.0) - 57.0) / (34.0 / 12f64.sqrt());
            1.0 - (-cohort.baseline_rate * 10.0 * (0.8 * z).exp()).exp()
        })
        .collect();

    let c_true = harrell_c(&truth, &times, &events)?;
    let c_age = harrell_c(&age_only, &times, &events)?;
    println!("C true risk {c_true:.3}, age only {c_age:.3}");

    let ci = bootstrap_ci(n, |idx| {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let ev: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
        harrell_c(&pick(&truth), &pick(&times), &ev)
    }, 200, 9)?;
    println!("bootstrap 95% CI {:.3}-{:.3}", ci.lo, ci.hi);
    let sup = perm_test_cstat(&truth, &age_only, &times, &events, 0.0, PermutationMode::Superiority, 200, 9)?;
    println!("superiority over age only: p = {:.3}", sup.p_value);

    let outcome = binary_outcome(&times, &events, 10.0);
    let thr = match_operating_point(&truth, &outcome, OperatingTarget::MatchSpecificity(0.8))?;
    let conf = binary_confusion(&truth, thr, &outcome, 0.05)?;
    println!(
        "threshold {thr:.3}: sensitivity {:.3} ({:.3}-{:.3}), specificity {:.3}",
        conf.sensitivity, conf.sensitivity_ci.0, conf.sensitivity_ci.1, conf.specificity
    );

    let (hi, lo): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| truth[i] >= thr);
    let sel = |ix: &[usize]| -> (Vec<f64>, Vec<bool>) { (ix.iter().map(|&i| times[i]).collect(), ix.iter().map(|&i| events[i]).collect()) };
    let (th, eh) = sel(&hi);
    let (tl, el) = sel(&lo);
    let test = log_rank((&th, &eh), (&tl, &el))?;
    println!(
        "KM 10-year survival high {:.3} / low {:.3}, log-rank chi2 {:.1}",
        km_curve(&th, &eh).survival_at(10.0),
        km_curve(&tl, &el).survival_at(10.0),
        test.statistic
    );

    let nri = nri_category_free(&truth, &age_only, &outcome)?;
    println!("cfNRI vs age only {:.3} (events {:.3}, non-events {:.3})", nri.nri, nri.event, nri.nonevent);
    for e in enrichment(&truth, &outcome, &ENRICHMENT_FRACTIONS)? {
        println!("top {:.0}%: {:.2}x", 100.0 * e.fraction, e.fold);
    }
    let cal = calibration(&truth, &times, &events, 10.0, 10, ObservedRate::KaplanMeier)?;
    println!("calibration slope {:?}, MACE {:.4}", cal.slope, cal.mean_abs_error);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
