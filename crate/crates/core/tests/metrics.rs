use ppgrisk::cohort::{apply_inclusion, generate_synthetic, CohortRow, SyntheticSpec};
use ppgrisk::metrics::{
    binary_confusion, binary_outcome, evaluate_models, match_operating_point, model_thresholds, nri_categorical,
    subgroup_report, EvalConfig, ModelScores, OperatingTarget, OutcomeStatus, Subgroup, ThresholdMode,
    STANDARD_SUBGROUPS,
};
use ppgrisk::rng::keyed;
use rand::Rng;

/// Sensitivity and specificity at every candidate cut, by direct counting.
/// Candidates are the scores of subjects with a known outcome, plus `+inf`.
fn exhaustive_cuts(scores: &[f64], outcome: &[OutcomeStatus]) -> Vec<(f64, f64, f64)> {
    let mut cuts: Vec<f64> = scores
        .iter()
        .zip(outcome)
        .filter(|(_, o)| **o != OutcomeStatus::ExcludedCensored)
        .map(|(s, _)| *s)
        .collect();
    cuts.push(f64::INFINITY);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.into_iter()
        .map(|c| {
            let mut tp = 0.0;
            let mut p = 0.0;
            let mut tn = 0.0;
            let mut q = 0.0;
            for (&s, &o) in scores.iter().zip(outcome) {
                match o {
                    OutcomeStatus::EventWithin => {
                        p += 1.0;
                        if s >= c {
                            tp += 1.0;
                        }
                    }
                    OutcomeStatus::EventFree => {
                        q += 1.0;
                        if s < c {
                            tn += 1.0;
                        }
                    }
                    OutcomeStatus::ExcludedCensored => {}
                }
            }
            (c, tp / p, tn / q)
        })
        .collect()
}

fn random_case(seed: u64) -> (Vec<f64>, Vec<OutcomeStatus>) {
    let mut rng = keyed(&[seed, 77]);
    let n = rng.random_range(5..120);
    loop {
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..30) as f64) / 10.0).collect();
        let outcome: Vec<OutcomeStatus> = scores
            .iter()
            .map(|s| match rng.random_range(0..10) {
                0 => OutcomeStatus::ExcludedCensored,
                k if (k as f64) < 2.0 + 2.0 * s => OutcomeStatus::EventWithin,
                _ => OutcomeStatus::EventFree,
            })
            .collect();
        let pos = outcome.iter().filter(|o| **o == OutcomeStatus::EventWithin).count();
        let neg = outcome.iter().filter(|o| **o == OutcomeStatus::EventFree).count();
        if pos > 0 && neg > 0 {
            return (scores, outcome);
        }
    }
}

#[test]
fn operating_points_match_exhaustive_cut_search() {
    for seed in 0..100 {
        let (scores, outcome) = random_case(seed);
        let cuts = exhaustive_cuts(&scores, &outcome);
        let mut rng = keyed(&[seed, 78]);
        for _ in 0..5 {
            let target: f64 = rng.random();
            let spec_cut = cuts.iter().filter(|c| c.2 >= target).map(|c| c.0).fold(f64::INFINITY, f64::min);
            let sens_cut = cuts.iter().filter(|c| c.1 >= target).map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
            let got_spec = match_operating_point(&scores, &outcome, OperatingTarget::MatchSpecificity(target)).unwrap();
            let got_sens = match_operating_point(&scores, &outcome, OperatingTarget::MatchSensitivity(target)).unwrap();
            assert_eq!(got_spec, spec_cut, "seed {seed} specificity target {target}");
            assert_eq!(got_sens, sens_cut, "seed {seed} sensitivity target {target}");

            let c = binary_confusion(&scores, got_spec, &outcome, 0.05).unwrap();
            assert!(c.specificity >= target);
            assert!(c.sensitivity_ci.0 <= c.sensitivity && c.sensitivity <= c.sensitivity_ci.1);
        }
    }
}

#[test]
fn extreme_targets_are_reachable_and_out_of_range_ones_are_not() {
    let (scores, outcome) = random_case(5);
    let all = match_operating_point(&scores, &outcome, OperatingTarget::MatchSpecificity(1.0)).unwrap();
    assert_eq!(binary_confusion(&scores, all, &outcome, 0.05).unwrap().specificity, 1.0);
    let every = match_operating_point(&scores, &outcome, OperatingTarget::MatchSensitivity(1.0)).unwrap();
    assert_eq!(binary_confusion(&scores, every, &outcome, 0.05).unwrap().sensitivity, 1.0);
    let err = match_operating_point(&scores, &outcome, OperatingTarget::MatchSpecificity(1.2)).unwrap_err();
    assert!(err.to_string().contains("[0, 1]"));
}

#[test]
fn categorical_nri_counts_moves_across_the_cut() {
    use OutcomeStatus::*;
    let outcome = [EventWithin, EventWithin, EventWithin, EventFree, EventFree, EventFree, EventFree, ExcludedCensored];
    let old = [0.1, 0.3, 0.1, 0.3, 0.3, 0.1, 0.1, 0.3];
    let new = [0.3, 0.1, 0.3, 0.1, 0.1, 0.3, 0.1, 0.1];
    // Events: two up, one down. Non-events: two down, one up.
    let nri = nri_categorical(&new, &old, 0.2, 0.2, &outcome).unwrap();
    assert!((nri.event - 1.0 / 3.0).abs() < 1e-12);
    assert!((nri.nonevent - 1.0 / 4.0).abs() < 1e-12);
    assert!((nri.nri - (1.0 / 3.0 + 1.0 / 4.0)).abs() < 1e-12);
}

fn scored_cohort() -> (Vec<CohortRow>, Vec<ModelScores>) {
    let cohort = generate_synthetic(&SyntheticSpec {
        n_subjects: 1500,
        seed: 3,
        waveform_length: 32,
        true_coefficients: [("age", 0.7), ("sbp", 0.4), ("vascular", 0.5)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        ..SyntheticSpec::default()
    })
    .unwrap();
    let truth: Vec<f64> = (0..cohort.rows.len()).map(|i| cohort.true_risk(i, 10.0)).collect();
    let ids: Vec<&str> = cohort.rows.iter().map(|r| r.subject_id.as_str()).collect();
    let (rows, _) = apply_inclusion(&cohort.rows);
    let risk_of = |r: &CohortRow| truth[ids.iter().position(|id| *id == r.subject_id).unwrap()];
    let exact = ModelScores {
        name: "truth".into(),
        risks: rows.iter().map(|r| Some(risk_of(r))).collect(),
    };
    let noisy = ModelScores {
        name: "noisy".into(),
        risks: rows
            .iter()
            .enumerate()
            .map(|(i, r)| (i % 7 != 0).then(|| (risk_of(r) * (1.0 + 0.5 * ((i * 13 % 10) as f64 / 10.0 - 0.45))).min(1.0)))
            .collect(),
    };
    (rows, vec![exact, noisy])
}

fn fast_config() -> EvalConfig {
    EvalConfig {
        reference: "truth".into(),
        bootstrap_iterations: 40,
        permutation_iterations: 40,
        ..EvalConfig::default()
    }
}

#[test]
fn report_has_a_block_per_model_and_self_reference_is_zero() {
    let (rows, models) = scored_cohort();
    let report = evaluate_models(&rows, &models, &fast_config()).unwrap();
    assert_eq!(report.models.len(), 2);
    assert_eq!(report.subgroups.len(), STANDARD_SUBGROUPS.len());
    let truth = &report.models[0];
    assert_eq!(truth.delta_vs_reference, 0.0);
    assert_eq!(truth.cfnri, 0.0);
    assert_eq!(truth.n, rows.len());
    assert!(report.models[1].n < rows.len());
    assert_eq!(truth.operating_points.len(), 3);
    assert_eq!(truth.log_rank.len(), 3);
    for g in &truth.km_curves {
        for w in g.steps.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }
}

#[test]
fn all_subgroup_reproduces_the_global_figures() {
    let (rows, models) = scored_cohort();
    let cfg = fast_config();
    let report = evaluate_models(&rows, &models, &cfg).unwrap();
    let thresholds = model_thresholds(&rows, &models, &cfg).unwrap();
    let all = subgroup_report(&rows, &models, &thresholds, Subgroup::All, &cfg).unwrap();
    assert_eq!(all.n, rows.len());
    for (sub, global) in all.models.iter().zip(&report.models) {
        assert_eq!(sub.model, global.model);
        assert_eq!(sub.n, global.n);
        assert_eq!(sub.c_statistic, Some(global.c_statistic));
        assert_eq!(sub.mean_predicted_risk, global.mean_predicted_risk);
        let op = global
            .operating_points
            .iter()
            .find(|o| o.mode == ThresholdMode::MatchSpecificity)
            .unwrap();
        assert_eq!(sub.sensitivity, Some(op.confusion.sensitivity));
        assert_eq!(sub.specificity, Some(op.confusion.specificity));
        assert_eq!(sub.sensitivity, Some(global.sensitivity));
    }
}

#[test]
fn matched_specificity_meets_the_reference_rule() {
    let (rows, models) = scored_cohort();
    let report = evaluate_models(&rows, &models, &fast_config()).unwrap();
    let times: Vec<f64> = rows.iter().map(|r| r.followup_years()).collect();
    let events: Vec<bool> = rows.iter().map(|r| r.event).collect();
    let outcome = binary_outcome(&times, &events, 10.0);
    let sbp: Vec<f64> = rows.iter().map(|r| r.sbp.unwrap()).collect();
    let rule = binary_confusion(&sbp, 140.0, &outcome, 0.05).unwrap();
    assert_eq!(report.sbp140.sensitivity, rule.sensitivity);
    assert_eq!(report.sbp140.specificity, rule.specificity);
    let op = &report.models[0].operating_points[0];
    assert_eq!(op.mode, ThresholdMode::MatchSpecificity);
    assert!(op.confusion.specificity >= rule.specificity);
}

#[test]
fn evaluation_is_deterministic_and_seed_sensitive() {
    let (rows, models) = scored_cohort();
    let cfg = fast_config();
    let a = serde_json::to_string(&evaluate_models(&rows, &models, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&evaluate_models(&rows, &models, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_string(&evaluate_models(&rows, &models, &EvalConfig { seed: 9, ..cfg }).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn missing_reference_is_rejected() {
    let (rows, models) = scored_cohort();
    let cfg = EvalConfig {
        reference: "absent".into(),
        ..fast_config()
    };
    assert!(evaluate_models(&rows, &models, &cfg).is_err());
}
