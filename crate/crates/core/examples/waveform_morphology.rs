// Synthesizes pulses, extracts morphology features and shows the
// Brownian tape warp used for augmentation.

use ppgrisk::signal::{
    brownian_tape_warp, extract_morphology, preprocess, synth_pulse, AugmentConfig, MorphologyFeatures,
};
use ppgrisk::Result;

pub fn run_example() -> Result<()> {
    println!("latent  {}", MorphologyFeatures::CSV_HEADER);
    for latent in [-1.5, 0.0, 1.5] {
        let pulse = synth_pulse(latent, 100, 3)?;
        let clean = preprocess(&pulse.samples, pulse.sample_period)?;
        let m = extract_morphology(&clean, 170.0)?;
        println!("{latent:>6}  {}", m.csv_fields());
    }

    let pulse = synth_pulse(0.0, 100, 3)?;
    let identity = brownian_tape_warp(
        &pulse,
        &AugmentConfig {
            magnitude: 0.0,
            apply_probability: 1.0,
            seed: 1,
        },
    )?;
    assert_eq!(identity.samples, pulse.samples);

    let warped = brownian_tape_warp(
        &pulse,
        &AugmentConfig {
            magnitude: 2.0,
            apply_probability: 1.0,
            seed: 1,
        },
    )?;
    let shift = pulse
        .samples
        .iter()
        .zip(&warped.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("magnitude 2 warp: max sample change {shift:.3}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
