// Fits a ridge-penalized Cox model, reports hazard ratios and Wald tests,
// and predicts ten-year risk.

use ppgrisk::cohort::{apply_inclusion, generate_synthetic, SyntheticSpec};
use ppgrisk::survival::{build_features, fit_cox, FeatureVector, ModelKind, ModelSpec, PpgInputs, DEFAULT_RIDGE};
use ppgrisk::Result;

pub fn run_example() -> Result<()> {
    let cohort = generate_synthetic(&SyntheticSpec {
        n_subjects: 5000,
        seed: 2,
        true_coefficients: [("age", 0.7), ("sex", -0.3), ("smoker", 0.4), ("sbp", 0.3)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        ..SyntheticSpec::default()
    })?;
    let (rows, _) = apply_inclusion(&cohort.rows);
    let spec = ModelSpec::builtin(ModelKind::OfficeRefitWho);
    let features: Vec<FeatureVector> = rows
        .iter()
        .map(|r| build_features(&spec, r, &PpgInputs::default()))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = rows.iter().map(|r| r.followup_years()).collect();
    let events: Vec<bool> = rows.iter().map(|r| r.event).collect();

    let fit = fit_cox(&spec, &features, &times, &events, DEFAULT_RIDGE)?;
    println!("converged {} after {} iterations, loglik {:.2}", fit.converged, fit.iterations, fit.loglik);
    for (name, (b, w)) in fit.design_names.iter().zip(fit.beta.iter().zip(fit.wald_pvalues())) {
        println!("{name:<20} beta {b:>7.3}  p {:.2e}", w.p_value);
    }
    for cov in ["age", "sbp", "male_smoker"] {
        let hr = fit.hazard_ratio_at_age(cov, 63.0)?;
        let unit = if hr.per_unit { "per unit" } else { "per SD" };
        println!("HR {cov} at 63: {:.2} ({:.2}-{:.2}) {unit}", hr.hr, hr.lo, hr.hi);
    }
    let r = fit.predict_risk(&features[0], 10.0)?;
    println!("subject {} ten-year risk {:.3}", r.subject_id, r.risk);

    let restored = ppgrisk::survival::CoxFit::parse_text(&fit.to_text())?;
    assert_eq!(restored.beta, fit.beta);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
