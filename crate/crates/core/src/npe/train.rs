// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Batch, MdnConfig, PosteriorModel};
use crate::dataset::TrainingSet;
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::simulator::LorenzParams;

/// Mini-batch Adam settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub val_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 30,
            val_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid("learning rate and batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid("bad Adam moment settings"));
        }
        Ok(())
    }
}

/// One row of the training log; epoch 0 is the untrained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation NLL.
    pub model: PosteriorModel,
    pub log: Vec<EpochRecord>,
    pub best_val_nll: f64,
    pub n_train: usize,
    pub n_val: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let lr = cfg.learning_rate;
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
        }
    }
}

/// Copies the rows at `idx` into contiguous buffers.
fn gather(set: &TrainingSet, idx: &[usize], thetas: &mut Vec<LorenzParams>, feats: &mut Vec<f64>) {
    thetas.clear();
    feats.clear();
    for &i in idx {
        thetas.push(set.thetas[i]);
        feats.extend_from_slice(set.features_of(i));
    }
}

const EVAL_CHUNK: usize = 1024;

fn mean_nll(model: &PosteriorModel, set: &TrainingSet, idx: &[usize]) -> Result<f64> {
    let (mut thetas, mut feats) = (Vec::new(), Vec::new());
    let mut total = 0.0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        gather(set, chunk, &mut thetas, &mut feats);
        total += model.nll_loss(&Batch::new(&thetas, &feats))? * chunk.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

/// Fits the mixture-density network by mini-batch Adam on the negative
/// log-likelihood, keeping the weights with the best held-out NLL.
pub fn train(set: &TrainingSet, config: &MdnConfig, opt: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_with_progress(set, config, opt, seed, |_| {})
}

/// As [`train`], calling `progress` after every epoch (and once for the initial model).
pub fn train_with_progress(
    set: &TrainingSet,
    config: &MdnConfig,
    opt: &TrainConfig,
    seed: u64,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    opt.validate()?;
    if set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = PosteriorModel::init(config.clone(), set.norm, set.prior, set.w, seed)?;

    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, stream::SPLIT, 0));
    let n_val = if n < 2 {
        0
    } else {
        ((n as f64 * opt.val_fraction).round() as usize).clamp(1, n - 1)
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    // A singleton set validates on its only sample.
    let val_idx: Vec<usize> = if n_val == 0 {
        train_idx.clone()
    } else {
        val_idx.to_vec()
    };

    let init_val = mean_nll(&model, set, &val_idx)?;
    let init_train = mean_nll(&model, set, &train_idx)?;
    let mut log = vec![EpochRecord {
        epoch: 0,
        train_nll: init_train,
        val_nll: init_val,
    }];
    progress(&log[0]);
    let mut best = (init_val, model.weights.clone(), 0usize);

    let mut adam = Adam::new(model.weights.len());
    let mut grad = vec![0.0; model.weights.len()];
    let (mut thetas, mut feats) = (Vec::new(), Vec::new());
    let mut global_batch = 0usize;
    for epoch in 1..=opt.epochs {
        train_idx.shuffle(&mut seed::rng(seed, stream::SHUFFLE, epoch as u64));
        let mut total = 0.0;
        for chunk in train_idx.chunks(opt.batch_size) {
            gather(set, chunk, &mut thetas, &mut feats);
            let loss = model
                .grad_nll_into(&Batch::new(&thetas, &feats), &mut grad)
                .map_err(|e| match e {
                    Error::NonFiniteLoss { loss, .. } => Error::NonFiniteLoss {
                        batch: global_batch,
                        loss,
                    },
                    other => other,
                })?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    batch: global_batch,
                    loss,
                });
            }
            adam.step(opt, &mut model.weights, &grad);
            total += loss * chunk.len() as f64;
            global_batch += 1;
        }
        let val = mean_nll(&model, set, &val_idx)?;
        let rec = EpochRecord {
            epoch,
            train_nll: total / train_idx.len() as f64,
            val_nll: val,
        };
        progress(&rec);
        log.push(rec);
        if val < best.0 {
            best = (val, model.weights.clone(), epoch);
        }
    }

    model.weights = best.1;
    model.meta.epochs = opt.epochs;
    model.meta.best_epoch = best.2;
    model.meta.final_nll = best.0;
    Ok(TrainOutcome {
        model,
        log,
        best_val_nll: best.0,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
    })
}
