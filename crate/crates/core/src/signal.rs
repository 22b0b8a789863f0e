//! PPG waveform preprocessing, engineered morphology features, synthetic
//! pulses and the Brownian tape-speed augmentation.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::stats::sigmoid;

/// Canonical encoder input length. Waveforms of any other length are
/// linearly resampled to this at ingestion.
pub const CANONICAL_LENGTH: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    /// Seconds per sample.
    pub sample_period: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_period: f64) -> Self {
        Waveform {
            samples,
            sample_period,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Affine rescale to [0, 1]. A flat input maps to all zeros.
pub fn preprocess(raw: &[f64], sample_period: f64) -> Result<Waveform> {
    if raw.is_empty() {
        return Err(Error::invalid("cannot preprocess an empty waveform"));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("waveform contains non-finite samples"));
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let samples = if hi > lo {
        let span = hi - lo;
        raw.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(Waveform::new(samples, sample_period))
}

/// Linear resampling onto `len` points spanning the same duration.
pub fn resample_linear(w: &Waveform, len: usize) -> Result<Waveform> {
    if w.is_empty() || len < 2 {
        return Err(Error::invalid("resampling needs a non-empty input and len >= 2"));
    }
    if w.len() == len {
        return Ok(w.clone());
    }
    let n = w.len();
    let scale = (n - 1) as f64 / (len - 1) as f64;
    let samples = (0..len)
        .map(|i| interpolate(&w.samples, i as f64 * scale))
        .collect();
    let duration = w.sample_period * (n - 1) as f64;
    Ok(Waveform::new(samples, duration / (len - 1) as f64))
}

/// Linear interpolation at a fractional position, clamped to the signal range.
fn interpolate(x: &[f64], pos: f64) -> f64 {
    let last = x.len() - 1;
    let pos = pos.clamp(0.0, last as f64);
    let i0 = pos.floor() as usize;
    if i0 >= last {
        return x[last];
    }
    let frac = pos - i0 as f64;
    x[i0] * (1.0 - frac) + x[i0 + 1] * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphologyFeatures {
    /// Diastolic over systolic peak amplitude.
    pub reflection_index: Option<f64>,
    /// Systolic-to-diastolic peak time, seconds.
    pub peak_to_peak_time: Option<f64>,
    pub peak_position: usize,
    pub notch_position: Option<usize>,
    pub shoulder_position: Option<usize>,
    pub notch_absent: bool,
    /// Height over peak-to-peak time, m/s.
    pub stiffness_index: Option<f64>,
}

impl MorphologyFeatures {
    pub const CSV_HEADER: &'static str = "ri,dt_s,peak_idx,notch_idx,shoulder_idx,notch_absent,si_mps";

    pub fn csv_fields(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
        }
        format!(
            "{},{},{},{},{},{},{}",
            opt(self.reflection_index),
            opt(self.peak_to_peak_time),
            self.peak_position,
            opt(self.notch_position),
            opt(self.shoulder_position),
            u8::from(self.notch_absent),
            opt(self.stiffness_index),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MorphologyConfig {
    /// Centered moving-average window applied before extrema detection.
    /// Values below 2 disable smoothing.
    pub smoothing_window: usize,
}

pub fn extract_morphology(w: &Waveform, subject_height_cm: f64) -> Result<MorphologyFeatures> {
    extract_morphology_with(w, subject_height_cm, &MorphologyConfig::default())
}

pub fn extract_morphology_with(
    w: &Waveform,
    subject_height_cm: f64,
    cfg: &MorphologyConfig,
) -> Result<MorphologyFeatures> {
    if w.len() < 3 {
        return Err(Error::invalid("waveform too short for morphology extraction"));
    }
    if !(subject_height_cm > 0.0) {
        return Err(Error::invalid("subject height must be positive"));
    }
    let smoothed;
    let x: &[f64] = if cfg.smoothing_window >= 2 {
        smoothed = moving_average(&w.samples, cfg.smoothing_window);
        &smoothed
    } else {
        &w.samples
    };
    let n = x.len();

    let peak = argmax(x);
    if peak == n - 1 {
        return Err(Error::invalid("no falling edge: systolic peak at the last sample"));
    }

    let diastolic = (peak + 1..n - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .fold(None::<usize>, |best, i| match best {
            Some(b) if x[b] >= x[i] => Some(b),
            _ => Some(i),
        });

    let Some(dia) = diastolic else {
        return Ok(MorphologyFeatures {
            reflection_index: None,
            peak_to_peak_time: None,
            peak_position: peak,
            notch_position: None,
            shoulder_position: shoulder(x, peak),
            notch_absent: true,
            stiffness_index: None,
        });
    };

    let notch = (peak + 1..dia)
        .filter(|&i| x[i] < x[i - 1] && x[i] <= x[i + 1])
        .fold(None::<usize>, |best, i| match best {
            Some(b) if x[b] <= x[i] => Some(b),
            _ => Some(i),
        });

    let ri = if x[peak] > 0.0 { x[dia] / x[peak] } else { 0.0 };
    let dt = (dia - peak) as f64 * w.sample_period;
    Ok(MorphologyFeatures {
        reflection_index: Some(ri),
        peak_to_peak_time: Some(dt),
        peak_position: peak,
        notch_position: notch,
        shoulder_position: if notch.is_none() { shoulder(x, peak) } else { None },
        notch_absent: notch.is_none(),
        stiffness_index: Some((subject_height_cm / 100.0) / dt),
    })
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// First sample after the peak where the discrete second difference turns
/// non-negative (inflection of the falling edge). Approximate by nature.
fn shoulder(x: &[f64], peak: usize) -> Option<usize> {
    (peak + 1..x.len() - 1).find(|&i| x[i + 1] - 2.0 * x[i] + x[i - 1] >= 0.0)
}

fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(x.len() - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub magnitude: f64,
    pub apply_probability: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            magnitude: 2.0,
            apply_probability: 0.5,
            seed: 0,
        }
    }
}

/// Brownian tape-speed warp.
///
/// With probability `apply_probability` the waveform is replayed at a tape
/// speed that performs a Gaussian random walk starting at 1; increments have
/// standard deviation `magnitude / L`. The cumulative displacement is shifted
/// to start at 0 so that zero noise reproduces the input exactly.
pub fn brownian_tape_warp(w: &Waveform, cfg: &AugmentConfig) -> Result<Waveform> {
    if !(cfg.magnitude >= 0.0) {
        return Err(Error::invalid("warp magnitude must be non-negative"));
    }
    if !(0.0..=1.0).contains(&cfg.apply_probability) {
        return Err(Error::invalid("apply_probability must lie in [0, 1]"));
    }
    if w.is_empty() {
        return Err(Error::invalid("cannot warp an empty waveform"));
    }
    let mut rng = rng::keyed(&[cfg.seed, stream::AUGMENT]);
    let gate: f64 = rng.random();
    if gate >= cfg.apply_probability {
        return Ok(w.clone());
    }
    let sd = cfg.magnitude / w.len() as f64;
    let increments: Vec<f64> = (0..w.len())
        .map(|_| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect::<Vec<f64>>();
    Ok(warp_with_increments(w, &increments))
}

/// Normalized displacement field for a sequence of speed increments.
pub fn tape_displacement(increments: &[f64]) -> Vec<f64> {
    let mut speed = 1.0;
    let mut disp = Vec::with_capacity(increments.len());
    let mut acc = 0.0;
    for (i, z) in increments.iter().enumerate() {
        speed += z;
        if i > 0 {
            acc += speed;
        }
        disp.push(acc);
    }
    disp
}

/// Applies the warp for explicit, already-scaled speed increments.
pub fn warp_with_increments(w: &Waveform, increments: &[f64]) -> Waveform {
    assert_eq!(increments.len(), w.len(), "one increment per sample");
    let samples = tape_displacement(increments)
        .into_iter()
        .map(|pos| interpolate(&w.samples, pos))
        .collect();
    Waveform::new(samples, w.sample_period)
}

/// Shape parameters for synthetic pulses. Positions and widths are
/// fractions of the waveform length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub systolic_position: f64,
    pub systolic_width: f64,
    pub diastolic_width: f64,
    /// Systolic-to-diastolic delay when the latent is very negative.
    pub max_delay: f64,
    /// Delay when the latent is very positive.
    pub min_delay: f64,
    pub max_reflection: f64,
    /// Standard deviation of additive white noise before rescaling.
    pub noise: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape {
            systolic_position: 0.2,
            systolic_width: 0.06,
            diastolic_width: 0.08,
            max_delay: 0.40,
            min_delay: 0.22,
            max_reflection: 0.6,
            noise: 0.002,
        }
    }
}

impl PulseShape {
    /// Sample index of the systolic bump centre.
    pub fn systolic_index(&self, len: usize) -> usize {
        (self.systolic_position * len as f64).round() as usize
    }

    /// Sample index of the diastolic bump centre for a latent value.
    pub fn diastolic_index(&self, latent: f64, len: usize) -> usize {
        let s = sigmoid(latent);
        let delay = self.min_delay + (self.max_delay - self.min_delay) * (1.0 - s);
        self.systolic_index(len) + (delay * len as f64).round() as usize
    }

    pub fn diastolic_amplitude(&self, latent: f64) -> f64 {
        self.max_reflection * sigmoid(latent)
    }
}

/// Synthetic single-beat pulse whose morphology encodes a vascular latent.
///
/// The pulse spans one second. Higher latents raise the diastolic amplitude
/// (reflection index towards `max_reflection`) and shorten the
/// systolic-to-diastolic delay, the stiff-artery signature.
pub fn synth_pulse(vascular_latent: f64, len: usize, seed: u64) -> Result<Waveform> {
    synth_pulse_with(vascular_latent, len, seed, &PulseShape::default())
}

pub fn synth_pulse_with(
    vascular_latent: f64,
    len: usize,
    seed: u64,
    shape: &PulseShape,
) -> Result<Waveform> {
    if len < 32 {
        return Err(Error::invalid("synthetic pulses need at least 32 samples"));
    }
    let n = len as f64;
    let sys = shape.systolic_index(len) as f64;
    let dia = shape.diastolic_index(vascular_latent, len) as f64;
    let amp = shape.diastolic_amplitude(vascular_latent);
    let ws = shape.systolic_width * n;
    let wd = shape.diastolic_width * n;
    let noise = if shape.noise > 0.0 {
        Some(Normal::new(0.0, shape.noise).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut rng = rng::keyed(&[seed, stream::WAVEFORM]);
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64;
            let mut v = gaussian(t, sys, ws) + amp * gaussian(t, dia, wd);
            if let Some(d) = &noise {
                v += d.sample(&mut rng);
            }
            v
        })
        .collect();
    preprocess(&raw, 1.0 / n)
}

fn gaussian(t: f64, centre: f64, width: f64) -> f64 {
    let d = (t - centre) / width;
    (-0.5 * d * d).exp()
}
