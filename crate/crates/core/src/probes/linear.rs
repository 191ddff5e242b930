//! Multinomial logistic regression ("linear probe") trained with minibatch
//! AdamW, a linear learning-rate decay, periodic checkpoints and
//! patience-based early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, Dataset, Predictions};
use crate::sampling::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub checkpoint_every_minibatches: usize,
    pub minibatch_size: usize,
    /// Decoupled weight decay, applied to the weight matrix only.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// When false, validation data is ignored: all epochs run and the final
    /// parameters are kept.
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 1e-2,
            max_epochs: 100,
            patience_epochs: 10,
            checkpoint_every_minibatches: 50,
            minibatch_size: 32,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            early_stopping: true,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProbeInput(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 || self.minibatch_size == 0 || self.checkpoint_every_minibatches == 0
        {
            return bad("max_epochs, minibatch_size and checkpoint_every_minibatches must be positive");
        }
        if self.patience_epochs == 0 || self.patience_epochs > self.max_epochs {
            return bad("patience_epochs must lie in 1..=max_epochs");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub epoch: usize,
    pub step: usize,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major `[num_classes x dim]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub training_log: Vec<EpochLog>,
    /// The restored checkpoint, when validation data was available.
    pub restored: Option<CheckpointInfo>,
}

impl ProbeModel {
    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c]
                    + row
                        .iter()
                        .zip(x)
                        .map(|(w, &v)| w * f64::from(v))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Seeded initialization: weights uniform in `±1/sqrt(dim)`, zero bias.
pub fn initial_model(dim: usize, num_classes: usize, seed: u64) -> ProbeModel {
    let mut rng = rng_from_seed(seed);
    let bound = 1.0 / (dim as f64).sqrt();
    let weights = (0..dim * num_classes)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    ProbeModel {
        num_classes,
        dim,
        weights,
        bias: vec![0.0; num_classes],
        training_log: Vec::new(),
        restored: None,
    }
}

/// Mean cross-entropy of `model` over rows `idx` of `data`, with its
/// gradient `(d/dW, d/db)` in the same layout as the parameters.
pub fn loss_and_gradient(
    model: &ProbeModel,
    data: &Dataset,
    idx: &[usize],
) -> (f64, Vec<f64>, Vec<f64>) {
    let (c, d) = (model.num_classes, model.dim);
    let mut grad_w = vec![0.0; c * d];
    let mut grad_b = vec![0.0; c];
    let mut loss = 0.0;
    for &i in idx {
        let x = &data.features[i];
        let y = data.labels[i] as usize;
        let logits = model.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += lse - logits[y];
        for k in 0..c {
            let p = (logits[k] - lse).exp();
            let r = p - if k == y { 1.0 } else { 0.0 };
            grad_b[k] += r;
            let row = &mut grad_w[k * d..(k + 1) * d];
            for (g, &v) in row.iter_mut().zip(x) {
                *g += r * f64::from(v);
            }
        }
    }
    let n = idx.len().max(1) as f64;
    grad_w.iter_mut().for_each(|g| *g /= n);
    grad_b.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad_w, grad_b)
}

fn mean_loss(model: &ProbeModel, data: &Dataset) -> f64 {
    let mut total = 0.0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let logits = model.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - logits[y as usize];
    }
    total / data.len().max(1) as f64
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
}

impl AdamW {
    fn new(n: usize, cfg: &ProbeConfig) -> Self {
        AdamW {
            m: vec![0.0; n],
            v: vec![0.0; n],
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            t: 0,
        }
    }

    /// One update of `params` (`[weights.., bias..]` flattened by the
    /// caller); `decay_len` leading entries receive weight decay.
    fn step(&mut self, params: &mut [&mut f64], grads: &[f64], lr: f64, wd: f64, decay_len: usize) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            if i < decay_len {
                **p -= lr * wd * **p;
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            **p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Trains a probe on `train`, early-stopping on `val` when it is non-empty.
///
/// With validation data, parameters are snapshotted every
/// `checkpoint_every_minibatches` steps and once more when training ends;
/// the snapshot with the lowest validation loss is returned. Training stops
/// once the end-of-epoch validation loss has not improved for
/// `patience_epochs` epochs. Without validation data all `max_epochs` run
/// and the final parameters are returned.
pub fn train_probe(train: &Dataset, val: &Dataset, cfg: &ProbeConfig) -> Result<ProbeModel> {
    cfg.validate()?;
    if train.is_empty() || train.distinct_labels() < 2 {
        return Err(Error::SingleClassTrain);
    }
    if !val.is_empty() && val.dim != train.dim {
        return Err(Error::QueryDimMismatch {
            expected: train.dim,
            found: val.dim,
        });
    }
    let (c, d) = (train.num_classes as usize, train.dim);
    let mut model = initial_model(d, c, cfg.seed);
    let mut rng = rng_from_seed(cfg.seed ^ 0x5bd1_e995);
    let mut opt = AdamW::new(c * d + c, cfg);

    let steps_per_epoch = train.len().div_ceil(cfg.minibatch_size);
    let total_steps = (steps_per_epoch * cfg.max_epochs) as f64;
    let use_val = cfg.early_stopping && !val.is_empty();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;
    let mut best: Option<(CheckpointInfo, Vec<f64>, Vec<f64>)> = None;
    let mut best_epoch_loss = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut log = Vec::new();

    let consider = |model: &ProbeModel,
                        epoch: usize,
                        step: usize,
                        best: &mut Option<(CheckpointInfo, Vec<f64>, Vec<f64>)>|
     -> f64 {
        let val_loss = mean_loss(model, val);
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < b.val_loss) {
            *best = Some((
                CheckpointInfo {
                    epoch,
                    step,
                    val_loss,
                },
                model.weights.clone(),
                model.bias.clone(),
            ));
        }
        val_loss
    };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.minibatch_size) {
            let lr = cfg.learning_rate * (1.0 - step as f64 / total_steps);
            step += 1;
            let (loss, gw, gb) = loss_and_gradient(&model, train, batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            epoch_loss += loss;
            let grads: Vec<f64> = gw.into_iter().chain(gb).collect();
            let ProbeModel { weights, bias, .. } = &mut model;
            let mut params: Vec<&mut f64> = weights.iter_mut().chain(bias.iter_mut()).collect();
            opt.step(&mut params, &grads, lr, cfg.weight_decay, c * d);
            if model.weights.iter().chain(&model.bias).any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            if use_val && step.is_multiple_of(cfg.checkpoint_every_minibatches) {
                consider(&model, epoch, step, &mut best);
            }
        }
        let train_loss = epoch_loss / steps_per_epoch as f64;
        let val_loss = use_val.then(|| mean_loss(&model, val));
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if let Some(vl) = val_loss {
            if !vl.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            if vl < best_epoch_loss {
                best_epoch_loss = vl;
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
            }
            let done = stale_epochs >= cfg.patience_epochs || epoch == cfg.max_epochs;
            if done {
                consider(&model, epoch, step, &mut best);
                break;
            }
        }
    }

    if let Some((info, w, b)) = best {
        model.weights = w;
        model.bias = b;
        model.restored = Some(info);
    }
    model.training_log = log;
    Ok(model)
}

/// Softmax readout of a trained (or untrained) probe.
pub fn predict(model: &ProbeModel, queries: &Dataset) -> Result<Predictions> {
    if queries.dim != model.dim {
        return Err(Error::QueryDimMismatch {
            expected: model.dim,
            found: queries.dim,
        });
    }
    let scores = queries
        .features
        .iter()
        .map(|x| softmax(&model.logits(x)))
        .collect();
    Ok(Predictions::from_scores(
        queries.ids.clone(),
        scores,
        queries.labels.clone(),
    ))
}
