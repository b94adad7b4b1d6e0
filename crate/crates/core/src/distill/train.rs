use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::seq2seq::{DecoderParams, EncoderParams};
use crate::tensor::{Adam, AdamConfig, GradMap, Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Linear warm-up length in optimizer steps.
    pub warmup_steps: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f32,
    pub seed: u64,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Stop as soon as the dev score reaches this value.
    pub target: Option<f64>,
    pub dropout: bool,
    /// Cosine-decay the learning rate to 10% over the epoch budget.
    pub decay: bool,
    pub verbose: bool,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            warmup_steps: 200,
            clip_norm: 1.0,
            seed: 0,
            patience: 3,
            target: None,
            dropout: true,
            decay: false,
            verbose: false,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self, n_items: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("epochs, batch size and patience must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is not positive", self.lr)));
        }
        if n_items == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.batch_size > n_items {
            return Err(Error::Config(format!(
                "batch size {} exceeds the {n_items} training items",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Per-epoch record of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub dev_score: Vec<f64>,
    pub best_epoch: usize,
    pub best_score: f64,
    /// Items skipped (degenerate encodings, empty targets).
    pub skipped: usize,
    pub steps: u64,
}

/// Something with an ordered parameter list.
pub trait Trainable {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

impl Trainable for EncoderParams {
    fn params(&self) -> Vec<&Param> {
        EncoderParams::params(self)
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        EncoderParams::params_mut(self)
    }
}

impl Trainable for DecoderParams {
    fn params(&self) -> Vec<&Param> {
        DecoderParams::params(self)
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        DecoderParams::params_mut(self)
    }
}

impl Trainable for (EncoderParams, DecoderParams) {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.0.params();
        v.extend(self.1.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.0.params_mut();
        v.extend(self.1.params_mut());
        v
    }
}

fn snapshot<M: Trainable>(m: &M) -> Vec<Tensor> {
    m.params().iter().map(|p| p.value.clone()).collect()
}

fn restore<M: Trainable>(m: &mut M, snap: Vec<Tensor>) {
    for (p, v) in m.params_mut().into_iter().zip(snap) {
        p.value = v;
    }
}

/// Mean loss and gradients of one batch, or `None` when every item of the
/// batch was skipped. The batch closure receives the model, the epoch, the
/// item indices and the dropout stream.
pub type BatchResult = Result<Option<(f32, GradMap)>>;

/// Mini-batch Adam with warm-up, clipping and dev-score early stopping. The
/// best-scoring parameters are restored at the end.
pub fn run_epochs<M: Trainable>(
    model: &mut M,
    hyper: &TrainHyper,
    n_items: usize,
    mut batch: impl FnMut(&M, usize, &[usize], Option<ChaCha8Rng>) -> BatchResult,
    mut dev: impl FnMut(&M) -> Result<f64>,
) -> Result<TrainLog> {
    hyper.validate(n_items)?;
    let mut adam = Adam::new(AdamConfig {
        lr: hyper.lr,
        ..AdamConfig::default()
    });
    let mut log = TrainLog {
        best_score: f64::NEG_INFINITY,
        ..TrainLog::default()
    };
    let mut best: Option<Vec<Tensor>> = None;
    let mut bad = 0;
    let order_seed = rng::derive(hyper.seed, 1);
    let drop_seed = rng::derive(hyper.seed, 2);
    let mut order: Vec<usize> = (0..n_items).collect();
    let n_batches = n_items.div_ceil(hyper.batch_size);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng::stream(order_seed, epoch as u64));
        let (mut total, mut batches) = (0.0f64, 0usize);
        for (bi, idx) in order.chunks(hyper.batch_size).enumerate() {
            let r = hyper
                .dropout
                .then(|| rng::stream(rng::derive(drop_seed, epoch as u64), bi as u64));
            let Some((loss, grads)) = batch(model, epoch, idx, r)? else {
                continue;
            };
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("loss is {loss}"),
                });
            }
            let mut params = model.params_mut();
            grads.accumulate_into(params.iter_mut().map(|p| &mut **p));
            clip(&mut params, hyper.clip_norm);
            let warm = if hyper.warmup_steps == 0 {
                1.0
            } else {
                ((log.steps + 1) as f32 / hyper.warmup_steps as f32).min(1.0)
            };
            let progress = (epoch * n_batches + bi) as f32 / (hyper.epochs * n_batches) as f32;
            let decay = if hyper.decay {
                0.1 + 0.45 * (1.0 + (std::f32::consts::PI * progress).cos())
            } else {
                1.0
            };
            adam.config.lr = hyper.lr * warm * decay;
            adam.step(&mut params)?;
            log.steps += 1;
            total += loss as f64;
            batches += 1;
        }
        let mean = if batches == 0 { f64::NAN } else { total / batches as f64 };
        let score = dev(model)?;
        log.epoch_loss.push(mean);
        log.dev_score.push(score);
        if hyper.verbose {
            eprintln!("epoch {epoch:>3}  loss {mean:.5}  dev {score:.4}");
        }
        // Ties move the snapshot forward but do not reset patience.
        if score >= log.best_score {
            bad = if score > log.best_score { 0 } else { bad + 1 };
            log.best_score = score;
            log.best_epoch = epoch;
            best = Some(snapshot(model));
        } else {
            bad += 1;
        }
        if hyper.target.is_some_and(|t| score >= t) || bad >= hyper.patience {
            break;
        }
    }
    if let Some(b) = best {
        restore(model, b);
    }
    Ok(log)
}

/// Scales all trainable gradients so their joint norm is at most `max`.
fn clip(params: &mut [&mut Param], max: f32) {
    if max <= 0.0 {
        return;
    }
    let sq: f64 = params
        .iter()
        .filter_map(|p| p.value.grad.as_ref())
        .flat_map(|g| g.iter())
        .map(|&x| (x as f64) * (x as f64))
        .sum();
    let norm = sq.sqrt() as f32;
    if norm > max {
        let s = max / norm;
        for p in params.iter_mut() {
            if let Some(g) = p.value.grad.as_mut() {
                g.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
}
