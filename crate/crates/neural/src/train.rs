//! Minibatch Adam training with per-step teacher forcing and model selection
//! on validation partial loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twoport_core::adam::{Adam, AdamConfig};
use twoport_core::dataset::DatasetRecord;
use twoport_core::ValueGrid;

use crate::elem::Elem;
use crate::error::{NeuralError, Result};
use crate::model::{coin, tokens_of, Model, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Probability of feeding the gold token at each step.
    pub teacher_forcing: f64,
    pub batch: usize,
    /// Global gradient-norm cap; non-positive disables clipping.
    pub clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 700,
            lr: 1e-4,
            teacher_forcing: 0.5,
            batch: 32,
            clip: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.teacher_forcing) {
            return Err(NeuralError::invalid(format!("unusable training settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Per-sample means over the epoch's batches.
    pub train_loss: f64,
    pub train_partial: f64,
    pub train_token_acc: f64,
    /// Per-sample means under full teacher forcing.
    pub val_loss: f64,
    pub val_partial: f64,
    pub val_token_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_partial: f64,
}

/// Model input and targets of a dataset record.
pub fn sample_of(record: &DatasetRecord, grid: &ValueGrid) -> Result<Sample<f32>> {
    Ok(Sample {
        spectrum: record.normalized.as_slice().iter().map(|&x| x as f32).collect(),
        tokens: tokens_of(&record.config, grid)?,
    })
}

pub fn samples_of(records: &[DatasetRecord], grid: &ValueGrid) -> Result<Vec<Sample<f32>>> {
    records.iter().map(|r| sample_of(r, grid)).collect()
}

fn norm<T: Elem>(g: &[T]) -> f64 {
    g.iter()
        .map(|x| {
            let v = x.to_f64().unwrap_or(f64::NAN);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Trains `model` in place and leaves it at the best validation epoch.
/// `on_epoch` sees every epoch's log line as it completes.
pub fn train<T: Elem>(
    model: &mut Model<T>,
    train_set: &[Sample<T>],
    val_set: &[Sample<T>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NeuralError::invalid("training and validation sets must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model.theta.len(), AdamConfig::with_lr(config.lr));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grad = vec![T::zero(); model.theta.len()];
    let mut best = (0, f64::INFINITY, model.theta.clone());
    let mut log = TrainLog {
        config: *config,
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        best_val_partial: f64::INFINITY,
    };
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut partial = 0.0;
        let mut counts = crate::decoder::TokenCounts::default();
        for (step, idx) in order.chunks(config.batch).enumerate() {
            let batch: Vec<&Sample<T>> = idx.iter().map(|&i| &train_set[i]).collect();
            grad.fill(T::zero());
            let (l, c) = model
                .arch
                .batch(&model.theta, &batch, || coin(&mut rng, config.teacher_forcing), Some(&mut grad))?;
            let gn = norm(&grad);
            if !l.total().is_finite() || !gn.is_finite() {
                return Err(NeuralError::Divergence { epoch, step });
            }
            if config.clip > 0.0 && gn > config.clip {
                let s = T::of(config.clip / gn);
                grad.iter_mut().for_each(|g| *g = *g * s);
            }
            adam.step(&mut model.theta, &grad);
            total += l.total();
            partial += l.partial();
            counts.add(&c);
        }
        let (vl, vc) = model.score(val_set)?;
        let n = train_set.len() as f64;
        let nv = val_set.len() as f64;
        let line = EpochLog {
            epoch,
            train_loss: total / n,
            train_partial: partial / n,
            train_token_acc: counts.accuracy(),
            val_loss: vl.total() / nv,
            val_partial: vl.partial() / nv,
            val_token_acc: vc.accuracy(),
        };
        if !line.val_loss.is_finite() {
            return Err(NeuralError::Divergence {
                epoch,
                step: order.len().div_ceil(config.batch),
            });
        }
        if line.val_partial < best.1 {
            best = (epoch, line.val_partial, model.theta.clone());
        }
        on_epoch(&line);
        log.epochs.push(line);
    }
    log.best_epoch = best.0;
    log.best_val_partial = best.1;
    model.theta = best.2;
    Ok(log)
}
