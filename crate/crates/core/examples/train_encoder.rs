// Trains a small waveform encoder on proxy tasks, selects the checkpoint
// by tune-set Cox likelihood and reduces embeddings to five components.

use ppgrisk::cohort::{generate_synthetic, CohortRow, SyntheticSpec};
use ppgrisk::encoder::{fit_pca, train, AgeScale, EncoderConfig, ProxyTargets, TuneSet};
use ppgrisk::signal::{extract_morphology, AugmentConfig, Waveform};
use ppgrisk::Result;

pub fn run_example() -> Result<()> {
    let cohort = generate_synthetic(&SyntheticSpec {
        n_subjects: 600,
        seed: 11,
        waveform_length: 64,
        true_coefficients: [("age".to_string(), 0.6), ("vascular".to_string(), 0.8)].into(),
        ..SyntheticSpec::default()
    })?;
    let wave = |r: &CohortRow| -> Waveform { cohort.waveforms.get(&r.subject_id).expect("generated") };
    let (train_rows, tune_rows) = cohort.rows.split_at(450);

    let age = AgeScale::from_rows(train_rows)?;
    let targets: Vec<ProxyTargets> = train_rows
        .iter()
        .map(|r| {
            let notch = extract_morphology(&wave(r), r.height.unwrap_or(1.0)).ok().map(|m| !m.notch_absent);
            ProxyTargets::from_row(r, notch, age)
        })
        .collect();
    let waves: Vec<Waveform> = train_rows.iter().map(wave).collect();
    let tune = TuneSet {
        waveforms: tune_rows.iter().map(wave).collect(),
        times: tune_rows.iter().map(|r| r.followup_years()).collect(),
        events: tune_rows.iter().map(|r| r.event).collect(),
    };

    let cfg = EncoderConfig {
        input_length: 64,
        blocks: 2,
        channels: vec![4, 8],
        embedding_dim: 8,
        epochs: 4,
        batch_size: 32,
        learning_rate: 3e-3,
        augment: AugmentConfig {
            magnitude: 2.0,
            apply_probability: 0.5,
            seed: 5,
        },
        seed: 5,
        ..EncoderConfig::default()
    };
    let (encoder, log) = train(&cfg, &waves, &targets, &tune)?;
    print!("{}", log.to_csv());
    println!("selected epoch {} of {}", log.best_epoch, cfg.epochs);

    let emb: Vec<Vec<f64>> = waves.iter().map(|w| encoder.embed(w)).collect::<Result<_>>()?;
    let pca = fit_pca(&emb)?;
    let share: f64 = pca.explained_variance.iter().sum();
    println!("first subject features {:?}", pca.project5(&emb[0])?);
    println!("variance along the 5 components {share:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
