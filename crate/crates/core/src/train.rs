//! Mini-batch Adam training with best-by-validation selection.

use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::concvae::Noise;
use crate::corpus::{make_batches, sequential_batches, EncodedExample};
use crate::error::{Error, Result};
use crate::model::{Architecture, Model};
use crate::optim::{Adam, AdamConfig};
use crate::params::ParamStore;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 16,
            epochs: 10,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub seed: u64,
    pub epoch: usize,
    pub steps: u64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// KL weight at the end of the epoch (latent models).
    pub beta: f64,
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Final parameters and optimizer state.
    pub model: Model<T>,
    pub optimizer: Adam<T>,
    /// Parameters of the epoch with the lowest selection loss.
    pub best: ParamStore<T>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub logs: Vec<EpochLog>,
}

/// Independent sub-seed for stream `stream`, index `i` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64, i: u64) -> u64 {
    // splitmix64 finaliser over a simple combination
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(i.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SHUFFLE: u64 = 1;
const DROPOUT: u64 = 2;
const NOISE: u64 = 3;

/// KL weight after `step` optimizer steps.
pub fn beta_at(arch: &Architecture, step: u64, steps_per_epoch: usize) -> f64 {
    let warm = arch.cvae.kl_warmup_epochs * steps_per_epoch as f64;
    if warm <= 0.0 {
        arch.cvae.beta
    } else {
        arch.cvae.beta * (step as f64 / warm).min(1.0)
    }
}

/// Example-weighted mean loss without dropout and with latents at their means.
pub fn evaluation_loss<T: Scalar>(model: &Model<T>, examples: &[EncodedExample], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut total = 0.0;
    for batch in sequential_batches(examples, batch_size) {
        let mut g = Graph::new(&model.params);
        let t = model.loss(&mut g, &batch, &mut Noise::Zero, model.arch.cvae.beta)?;
        total += g.scalar(t.total).as_f64() * batch.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Trains a fresh model seeded with `seed`. `on_epoch` sees every log line as
/// it is produced.
pub fn train<T: Scalar>(
    arch: Architecture,
    train_set: &[EncodedExample],
    val_set: Option<&[EncodedExample]>,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("batch_size and epochs must be positive".into()));
    }
    let mut model = Model::<T>::new(arch, seed)?;
    let mut opt = Adam::new(cfg.adam.clone(), &model.params);
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let dropout = model.arch.model.dropout;
    let mut best = model.params.clone();
    let mut best_epoch = 0;
    let mut best_loss = f64::INFINITY;
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let batches = make_batches(train_set, cfg.batch_size, derive_seed(seed, SHUFFLE, epoch as u64));
        let mut sum = 0.0;
        let mut beta = 0.0;
        for batch in &batches {
            let step = opt.step;
            beta = beta_at(&model.arch, step, steps_per_epoch);
            let grads = {
                let mut g = Graph::with_dropout(&model.params, dropout, derive_seed(seed, DROPOUT, step));
                let mut noise = Noise::seeded(derive_seed(seed, NOISE, step));
                let t = model.loss(&mut g, batch, &mut noise, beta)?;
                let v = g.scalar(t.total).as_f64();
                if !v.is_finite() {
                    return Err(Error::Config(format!("non-finite loss at epoch {epoch}, step {step}")));
                }
                sum += v * batch.len() as f64;
                g.backward(t.total)
            };
            opt.update(&mut model.params, &grads);
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = match val_set {
            Some(v) if !v.is_empty() => Some(evaluation_loss(&model, v, cfg.batch_size)?),
            _ => None,
        };
        let selection = val_loss.unwrap_or(train_loss);
        let improved = selection < best_loss;
        if improved {
            best_loss = selection;
            best_epoch = epoch;
            best = model.params.clone();
        }
        let log = EpochLog {
            seed,
            epoch,
            steps: opt.step,
            train_loss,
            val_loss,
            beta,
            best: improved,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(TrainOutcome {
        model,
        optimizer: opt,
        best,
        best_epoch,
        best_loss,
        logs,
    })
}
