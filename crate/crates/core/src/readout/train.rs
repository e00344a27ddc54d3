use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{ImageSample, ReadoutModel};
use crate::blur::MAX_SIGMA;
use crate::sampling::seeded_rng;
use crate::{Error, Result, Scalar};

/// SGD-with-momentum schedule. Epochs are numbered from 1; the learning
/// rate is divided by `decay_factor` at every milestone epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub milestones: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { initial_lr: 0.001, decay_factor: 10.0, milestones: Vec::new(), epochs: 0, batch_size: 1, seed: 0, momentum: 0.9 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return bad("decay_factor must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.milestones.first() == Some(&0) || self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad("milestones must be positive and strictly increasing");
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.initial_lr / self.decay_factor.powi(drops as i32)
    }
}

/// One entry of the loss trace: full-dataset nll after the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub nll: f64,
}

/// Trains `model` on `data`. Batches are drawn from a per-epoch shuffle
/// seeded by `config.seed`, so the result depends only on the inputs.
pub fn train<S: Scalar>(
    mut model: ReadoutModel<S>,
    data: &[ImageSample<S>],
    config: &TrainConfig,
) -> Result<(ReadoutModel<S>, Vec<EpochRecord>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::NoFixations);
    }
    let mut trace = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok((model, trace));
    }
    let mut rng = seeded_rng(config.seed);
    let mut params = model.params();
    let mut velocity = vec![S::zero(); params.len()];
    let momentum = S::lit(config.momentum);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch);
        let step = S::lit(lr);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<ImageSample<S>> = chunk.iter().map(|&i| data[i].clone()).collect();
            if batch.iter().all(|s| s.fixations.is_empty()) {
                continue;
            }
            let (loss, grad) = model.gradients(&batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(grad) {
                *v = momentum * *v + g;
                *p -= step * *v;
            }
            model.set_params(&params).map_err(|_| Error::Diverged { epoch })?;
            if model.sigma_blur().as_f64() > MAX_SIGMA {
                return Err(Error::Diverged { epoch });
            }
        }
        let nll = model.nll(data)?;
        if !nll.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(EpochRecord { epoch, lr, nll: nll.as_f64() });
    }
    Ok((model, trace))
}
