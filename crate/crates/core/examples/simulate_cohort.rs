// Draws a synthetic cohort, applies the inclusion rules and splits it by
// site.

use ppgrisk::cohort::{apply_inclusion, generate_synthetic, split_by_site, Split, SyntheticSpec};
use ppgrisk::Result;

pub fn run_example() -> Result<()> {
    let spec = SyntheticSpec {
        n_subjects: 2000,
        seed: 7,
        true_coefficients: [("age", 0.6), ("smoker", 0.3), ("vascular", 0.5)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        ..SyntheticSpec::default()
    };
    let cohort = generate_synthetic(&spec)?;
    let events = cohort.rows.iter().filter(|r| r.event).count();
    println!("{} subjects, {} events, {} waveforms", cohort.rows.len(), events, cohort.waveforms.len());

    let (kept, log) = apply_inclusion(&cohort.rows);
    println!(
        "excluded {} (age {}, prior event {}, core {}, bmi/sbp {})",
        log.total(),
        log.age,
        log.prior_event,
        log.missing_core,
        log.missing_bmi_sbp
    );

    let assignment = spec
        .sites
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), [Split::Train, Split::Tune, Split::Test][i % 3]))
        .collect();
    let splits = split_by_site(&kept, &assignment)?;
    println!("train {} / tune {} / test {}", splits.train.len(), splits.tune.len(), splits.test.len());

    let mean_risk: f64 = (0..cohort.rows.len()).map(|i| cohort.true_risk(i, 10.0)).sum::<f64>() / cohort.rows.len() as f64;
    println!("mean true 10-year risk {:.3}", mean_risk);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
