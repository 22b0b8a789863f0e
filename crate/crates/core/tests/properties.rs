use proptest::prelude::*;

use ppgrisk::cohort::{apply_inclusion, generate_synthetic, split_by_site, Split, SplitAssignment, SyntheticSpec};
use ppgrisk::metrics::{
    binary_outcome, bootstrap_ci, calibration, concordance_brute_force, concordance_counts, enrichment, harrell_c,
    km_curve, log_rank, nri_category_free, ObservedRate, OutcomeStatus,
};
use ppgrisk::signal::tape_displacement;
use ppgrisk::survival::{fit_cox, FeatureVector, ModelSpec};

/// Survival data with coarse times so that ties are common.
fn survival_data(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>)> {
    (2..max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0i32..20, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(1i32..15, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn spec_with(n: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_subjects: n,
        seed,
        waveform_length: 32,
        true_coefficients: [("age".to_string(), 0.5)].into(),
        ..SyntheticSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fast_concordance_equals_brute_force((scores, times, events) in survival_data(200)) {
        let brute = concordance_brute_force(&scores, &times, &events);
        let fast = concordance_counts(&scores, &times, &events);
        match (brute, fast) {
            (Ok(b), Ok(f)) => prop_assert_eq!(b, f),
            (Err(_), Err(_)) => {}
            (b, f) => prop_assert!(false, "brute {:?} vs fast {:?}", b, f),
        }
    }

    #[test]
    fn concordance_invariant_under_monotone_transform((scores, times, events) in survival_data(80)) {
        prop_assume!(events.iter().any(|&e| e));
        let transformed: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() + 2.0 * s).collect();
        let a = harrell_c(&scores, &times, &events);
        let b = harrell_c(&transformed, &times, &events);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn reversed_scores_mirror_concordance((scores, times, events) in survival_data(80)) {
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        if let (Ok(a), Ok(b)) = (concordance_counts(&scores, &times, &events), concordance_counts(&neg, &times, &events)) {
            prop_assert_eq!(a.comparable, b.comparable);
            prop_assert_eq!(a.tied, b.tied);
            prop_assert_eq!(a.concordant, b.comparable - b.concordant - b.tied);
        }
    }

    #[test]
    fn km_is_a_non_increasing_step_function((_, times, events) in survival_data(100)) {
        let km = km_curve(&times, &events);
        let mut last = 1.0;
        let mut last_t = f64::NEG_INFINITY;
        for s in &km.steps {
            prop_assert!(s.survival <= last + 1e-15 && s.survival >= 0.0);
            prop_assert!(s.time > last_t);
            last = s.survival;
            last_t = s.time;
        }
        let total: usize = km.steps.iter().map(|s| s.events + s.censored).sum();
        prop_assert_eq!(total, times.len());
        if events.iter().all(|e| !e) {
            prop_assert!(km.steps.iter().all(|s| s.survival == 1.0));
        }
    }

    #[test]
    fn log_rank_is_symmetric_in_groups(
        (_, ta, ea) in survival_data(40),
        (_, tb, eb) in survival_data(40),
    ) {
        let ab = log_rank((&ta, &ea), (&tb, &eb));
        let ba = log_rank((&tb, &eb), (&ta, &ea));
        match (ab, ba) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x.statistic - y.statistic).abs() <= 1e-9 * x.statistic.max(1.0));
                prop_assert!((0.0..=1.0).contains(&x.p_value));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric failure"),
        }
    }

    #[test]
    fn category_free_nri_is_antisymmetric(
        (a, times, events) in survival_data(100),
        shift in prop::collection::vec(-3.0f64..3.0, 100),
    ) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s.round()).collect();
        let outcome = binary_outcome(&times, &events, 10.0);
        if let (Ok(ab), Ok(ba)) = (nri_category_free(&a, &b, &outcome), nri_category_free(&b, &a, &outcome)) {
            prop_assert!((ab.nri + ba.nri).abs() < 1e-12);
            prop_assert!((ab.event + ba.event).abs() < 1e-12);
            prop_assert!((ab.nonevent + ba.nonevent).abs() < 1e-12);
        }
    }

    #[test]
    fn whole_cohort_enrichment_is_one((scores, times, events) in survival_data(100)) {
        let outcome = binary_outcome(&times, &events, 10.0);
        if outcome.contains(&OutcomeStatus::EventWithin) {
            let e = enrichment(&scores, &outcome, &[1.0]).unwrap();
            prop_assert_eq!(e[0].fold, 1.0);
        }
    }

    #[test]
    fn calibration_bins_cover_every_subject((scores, times, events) in survival_data(150), bins in 1usize..12) {
        let risks: Vec<f64> = scores.iter().map(|s| s / 20.0).collect();
        if let Ok(t) = calibration(&risks, &times, &events, 10.0, bins, ObservedRate::RawProportion) {
            let n: usize = t.bins.iter().map(|b| b.count).sum();
            prop_assert!(n <= risks.len());
            prop_assert!(t.bins.len() <= bins);
            for w in t.bins.windows(2) {
                prop_assert!(w[0].max_score <= w[1].min_score);
            }
        }
    }

    #[test]
    fn small_warps_keep_the_tape_moving_forward(
        len in 32usize..256,
        magnitude in 0.0f64..=0.5,
        unit in prop::collection::vec(-1.0f64..=1.0, 256),
    ) {
        // Each speed change is at most magnitude / len, so the cumulative
        // change stays below 0.5 and the speed stays positive.
        let inc: Vec<f64> = unit[..len].iter().map(|u| u * magnitude / len as f64).collect();
        let d = tape_displacement(&inc);
        prop_assert_eq!(d[0], 0.0);
        for w in d.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inclusion_is_idempotent(seed in any::<u64>()) {
        let cohort = generate_synthetic(&spec_with(120, seed)).unwrap();
        let (once, log) = apply_inclusion(&cohort.rows);
        let (twice, log2) = apply_inclusion(&once);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(log2.total(), 0);
        prop_assert_eq!(once.len() + log.total(), cohort.rows.len());
    }

    #[test]
    fn site_split_is_a_partition(seed in any::<u64>(), pattern in prop::collection::vec(0u8..3, 8)) {
        let cohort = generate_synthetic(&spec_with(150, seed)).unwrap();
        let assignment: SplitAssignment = cohort_sites()
            .into_iter()
            .zip(pattern)
            .map(|(s, p)| (s, [Split::Train, Split::Tune, Split::Test][p as usize]))
            .collect();
        let splits = split_by_site(&cohort.rows, &assignment).unwrap();
        prop_assert_eq!(splits.train.len() + splits.tune.len() + splits.test.len(), cohort.rows.len());
        for (rows, split) in [(&splits.train, Split::Train), (&splits.tune, Split::Tune), (&splits.test, Split::Test)] {
            prop_assert!(rows.iter().all(|r| assignment[&r.site] == split));
        }
    }

    #[test]
    fn cox_fit_ignores_row_order(seed in any::<u64>(), rotate in 1usize..50) {
        let cohort = generate_synthetic(&spec_with(80, seed)).unwrap();
        prop_assume!(cohort.rows.iter().any(|r| r.event));
        let spec = ModelSpec::custom("age_bmi", vec!["age".into(), "bmi".into()], vec![]).unwrap();
        let feats: Vec<FeatureVector> = cohort
            .rows
            .iter()
            .map(|r| FeatureVector {
                subject_id: r.subject_id.clone(),
                names: spec.covariates.clone(),
                values: vec![r.age.unwrap(), r.bmi.unwrap()],
            })
            .collect();
        let times: Vec<f64> = cohort.rows.iter().map(|r| r.followup_years()).collect();
        let events: Vec<bool> = cohort.rows.iter().map(|r| r.event).collect();
        let a = fit_cox(&spec, &feats, &times, &events, 0.1).unwrap();

        let mut idx: Vec<usize> = (0..feats.len()).collect();
        idx.rotate_left(rotate);
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let f2: Vec<FeatureVector> = idx.iter().map(|&i| feats[i].clone()).collect();
        let e2: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
        let b = fit_cox(&spec, &f2, &pick(&times), &e2, 0.1).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            prop_assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn bootstrap_is_reproducible(seed in any::<u64>()) {
        let data: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64).collect();
        let mean = |idx: &[usize]| Ok(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64);
        let a = bootstrap_ci(data.len(), mean, 50, seed).unwrap();
        let b = bootstrap_ci(data.len(), mean, 50, seed).unwrap();
        prop_assert_eq!(a.lo.to_bits(), b.lo.to_bits());
        prop_assert_eq!(a.hi.to_bits(), b.hi.to_bits());
        prop_assert!(a.lo <= a.point && a.point <= a.hi);
    }
}

fn cohort_sites() -> Vec<String> {
    SyntheticSpec::default().sites
}
