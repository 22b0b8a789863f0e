//! Training loop with tune-set Cox checkpoint selection.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{Architecture, ChannelMoments, Encoder};
use super::optim::{learning_rate, Optimizer, OptimizerKind};
use super::pca::fit_pca;
use super::tasks::ProxyTargets;
use crate::error::{Error, Result};
use crate::rng::{keyed, stream};
use crate::signal::{brownian_tape_warp, AugmentConfig, Waveform};
use crate::survival::{fit_cox, FeatureVector, ModelSpec, DLS_FEATURES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub input_length: usize,
    pub blocks: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub dropout: f64,
    pub augment: AugmentConfig,
    /// EMA weight of the newest batch in the running norm statistics.
    pub norm_momentum: f64,
    /// Training inputs used to set the norm statistics before the first step.
    pub calibration_samples: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        EncoderConfig {
            input_length: arch.input_length,
            blocks: arch.channels.len(),
            channels: arch.channels,
            kernel_size: arch.kernel_size,
            embedding_dim: arch.embedding_dim,
            epochs: 80,
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: 3e-6,
            optimizer: OptimizerKind::AdamW,
            dropout: 0.0,
            augment: AugmentConfig::default(),
            norm_momentum: 0.1,
            calibration_samples: 256,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_length: self.input_length,
            channels: self.channels.clone(),
            kernel_size: self.kernel_size,
            embedding_dim: self.embedding_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture().validate()?;
        if self.blocks != self.channels.len() {
            return Err(Error::invalid(format!(
                "{} blocks declared but {} channel counts given",
                self.blocks,
                self.channels.len()
            )));
        }
        if self.embedding_dim < DLS_FEATURES {
            return Err(Error::invalid(format!("embedding_dim must be at least {DLS_FEATURES}")));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::invalid("learning rate and weight decay must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.norm_momentum) {
            return Err(Error::invalid("norm_momentum must lie in [0, 1]"));
        }
        if self.augment.magnitude < 0.0 || !(0.0..=1.0).contains(&self.augment.apply_probability) {
            return Err(Error::invalid("augmentation magnitude must be >= 0 and probability in [0, 1]"));
        }
        Ok(())
    }
}

/// Held-out subjects with survival outcomes, used to pick the checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneSet {
    pub waveforms: Vec<Waveform>,
    /// Years.
    pub times: Vec<f64>,
    pub events: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Partial log-likelihood of an unpenalized Cox model on the tune set's
    /// five principal components; `-inf` if that fit failed.
    pub tune_partial_loglik: f64,
    pub learning_rate: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,tune_partial_loglik,learning_rate,selected\n");
        for e in &self.epochs {
            s += &format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.tune_partial_loglik, e.learning_rate, e.selected as u8
            );
        }
        s
    }
}

/// Tune-set partial log-likelihood of a Cox model on the first five
/// principal components of the tune embeddings.
pub fn tune_partial_loglik(enc: &Encoder, tune: &TuneSet) -> Result<f64> {
    let emb: Vec<Vec<f64>> = tune
        .waveforms
        .par_iter()
        .map(|w| enc.embed(w))
        .collect::<Result<_>>()?;
    let pca = fit_pca(&emb)?;
    let spec = ModelSpec::custom(
        "tune_pca",
        (1..=DLS_FEATURES).map(|k| format!("ppg_{k}")).collect(),
        vec![],
    )?;
    let feats: Vec<FeatureVector> = emb
        .iter()
        .enumerate()
        .map(|(i, e)| {
            Ok(FeatureVector {
                subject_id: i.to_string(),
                names: spec.covariates.clone(),
                values: pca.project(e)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(fit_cox(&spec, &feats, &tune.times, &tune.events, 0.0)?.loglik)
}

fn dropout_scale(rate: f64, dim: usize, key: &[u64]) -> Option<Vec<f64>> {
    if rate == 0.0 {
        return None;
    }
    let mut rng = keyed(key);
    Some(
        (0..dim)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) })
            .collect(),
    )
}

/// Trains the encoder and returns the checkpoint with the highest tune-set
/// Cox partial log-likelihood (ties go to the later epoch).
pub fn train(
    cfg: &EncoderConfig,
    waveforms: &[Waveform],
    targets: &[ProxyTargets],
    tune: &TuneSet,
) -> Result<(Encoder, TrainingLog)> {
    cfg.validate()?;
    if waveforms.is_empty() || waveforms.len() != targets.len() {
        return Err(Error::invalid("training needs one target set per waveform and at least one subject"));
    }
    if tune.waveforms.is_empty() || tune.times.len() != tune.waveforms.len() || tune.events.len() != tune.waveforms.len() {
        return Err(Error::invalid("tune set is empty or misaligned"));
    }
    if let Some(i) = targets.iter().position(|t| t.present() == 0) {
        return Err(Error::invalid(format!("training subject {i} has no proxy targets")));
    }
    let arch = cfg.architecture();
    let mut enc = Encoder::init(&arch, cfg.seed)?;
    let calib: Vec<Waveform> = waveforms.iter().take(cfg.calibration_samples).cloned().collect();
    enc.calibrate_norms(&calib)?;

    let mut opt = Optimizer::new(cfg.optimizer, cfg.weight_decay, enc.tensors());
    let n = waveforms.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut step = 0;
    let mut best: Option<(f64, Encoder)> = None;
    let mut log = TrainingLog {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut keyed(&[cfg.seed, stream::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let key = [cfg.seed, epoch as u64, i as u64];
                    let aug = AugmentConfig {
                        seed: keyed(&[cfg.augment.seed, stream::AUGMENT, key[0], key[1], key[2]]).random(),
                        ..cfg.augment
                    };
                    let w = brownian_tape_warp(&waveforms[i], &aug)?;
                    let mask = dropout_scale(cfg.dropout, cfg.embedding_dim, &[cfg.seed, stream::DROPOUT, key[1], key[2]]);
                    enc.backward_with_dropout(&w, &targets[i], mask.as_deref())
                })
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; enc.num_params()];
            let mut moments: Option<Vec<ChannelMoments>> = None;
            for r in &results {
                loss_sum += r.loss;
                for (g, v) in grad.iter_mut().zip(&r.grad) {
                    *g += v;
                }
                match &mut moments {
                    Some(acc) => acc.iter_mut().zip(&r.moments).for_each(|(a, m)| a.merge(m)),
                    None => moments = Some(r.moments.clone()),
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !loss_sum.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numerical(format!("training loss diverged at epoch {epoch}")));
            }
            lr = learning_rate(cfg.learning_rate, step, steps_per_epoch, total_steps);
            opt.step(&mut enc.params, &grad, lr);
            enc.update_norms(&moments.expect("nonempty batch"), cfg.norm_momentum);
            step += 1;
        }
        let train_loss = loss_sum / n as f64;
        if !train_loss.is_finite() || enc.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numerical(format!("training loss diverged at epoch {epoch}")));
        }
        let ll = tune_partial_loglik(&enc, tune).unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _)| ll >= *b) {
            best = Some((ll, enc.clone()));
            log.best_epoch = epoch;
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            tune_partial_loglik: ll,
            learning_rate: lr,
            selected: false,
        });
    }
    log.epochs[log.best_epoch - 1].selected = true;
    Ok((best.expect("at least one epoch").1, log))
}
