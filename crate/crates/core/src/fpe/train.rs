use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{FaultDetectionOutput, Fpe};
use super::prototypes::{fpe_losses, PrototypeSet, TripletNegatives};
use crate::error::{Error, Result};
use crate::sim::{FaultLabels, MetricsWindow, Schedule};
use crate::tensor::{AdamW, Graph, Tensor};

/// One training example: the window before interval `t`, the schedule
/// decided for `t`, and the labels observed during `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpeSample {
    pub window: MetricsWindow,
    pub schedule: Schedule,
    pub labels: FaultLabels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpeTrainConfig {
    /// Epoch cap.
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Trailing share of the training data held out for early stopping.
    pub validation_fraction: f64,
    pub alpha: f64,
    pub decay: f64,
    pub negatives: TripletNegatives,
    pub optimizer: AdamW,
    /// Seeds the prototype initialisation.
    pub seed: u64,
}

impl Default for FpeTrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            alpha: 0.9,
            decay: 0.05,
            negatives: TripletNegatives::Mean,
            optimizer: AdamW::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FpeTrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub prototype_updates: usize,
    pub stopped_early: bool,
}

fn check_dataset(model: &Fpe, data: &[FpeSample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::data("empty training set"));
    }
    for s in data {
        s.labels.validate(model.config.classes as u8)?;
        if s.labels.len() != s.window.m {
            return Err(Error::shape(format!("{} labels for {} hosts", s.labels.len(), s.window.m)));
        }
    }
    Ok(())
}

/// One forward/backward pass. Returns `(L1, L2, next carry)`; gradients
/// are left in the model's store.
pub(crate) fn loss_step(
    model: &mut Fpe,
    protos: &PrototypeSet,
    sample: &FpeSample,
    carry: &Tensor,
    negatives: TripletNegatives,
    backward: bool,
) -> Result<(f64, f64, Tensor, Tensor)> {
    let mut g = Graph::new();
    let (vars, logits) = model.forward_with(&mut g, &model.store, &sample.window, &sample.schedule, carry)?;
    let (l1, l2) = fpe_losses(&mut g, logits, vars.embeddings, &sample.labels.0, protos, negatives)?;
    let loss = g.add(l1, l2)?;
    if backward {
        model.store.zero_grad();
        let grads = g.backward(loss)?;
        model.store.accumulate(&g, &grads);
    }
    Ok((
        g.value(l1).item(),
        g.value(l2).item(),
        g.value(vars.o2).clone(),
        g.value(vars.embeddings).clone(),
    ))
}

/// Mean `L1 + L2` over a sequence, carry starting from zero.
pub fn sequence_loss(
    model: &mut Fpe,
    protos: &PrototypeSet,
    data: &[FpeSample],
    negatives: TripletNegatives,
) -> Result<f64> {
    let mut carry: Option<Tensor> = None;
    let mut total = 0.0;
    for s in data {
        let c = match carry.take() {
            Some(c) if c.rows() == s.window.m => c,
            _ => model.zero_carry(s.window.m),
        };
        let (l1, l2, next, _) = loss_step(model, protos, s, &c, negatives, false)?;
        total += l1 + l2;
        carry = Some(next);
    }
    Ok(total / data.len().max(1) as f64)
}

/// Offline encoder training with conditional prototype updates and early stopping.
///
/// `data` must be in time order: the recurrent carry flows from one
/// sample to the next and is reset at every epoch.
pub fn train_fpe(model: &mut Fpe, data: &[FpeSample], config: &FpeTrainConfig) -> Result<(PrototypeSet, FpeTrainReport)> {
    check_dataset(model, data)?;
    if config.max_epochs == 0 {
        return Err(Error::param("need at least one epoch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut protos = PrototypeSet::random(model.config.classes, model.config.embed, config.alpha, config.decay, &mut rng)?;

    let n_val = if data.len() >= 10 {
        ((data.len() as f64 * config.validation_fraction).round() as usize).min(data.len() - 1)
    } else {
        0
    };
    let (train, val) = data.split_at(data.len() - n_val);

    let mut report = FpeTrainReport::default();
    let mut best = f64::INFINITY;
    let mut best_state = (model.store.clone(), protos.clone());
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        let mut carry: Option<Tensor> = None;
        let mut epoch_loss = 0.0;
        for s in train {
            let c = match carry.take() {
                Some(c) if c.rows() == s.window.m => c,
                _ => model.zero_carry(s.window.m),
            };
            let (l1, l2, next, emb) = loss_step(model, &protos, s, &c, config.negatives, true)?;
            epoch_loss += l1 + l2;
            report.prototype_updates += protos.update(&emb, &s.labels.0);
            config.optimizer.step(&mut model.store);
            protos.decay_step();
            carry = Some(next);
        }
        report.train_loss.push(epoch_loss / train.len() as f64);
        let score = if val.is_empty() {
            epoch_loss / train.len() as f64
        } else {
            sequence_loss(model, &protos, val, config.negatives)?
        };
        report.validation_loss.push(score);
        report.epochs_run = epoch + 1;
        if score < best {
            best = score;
            report.best_epoch = epoch + 1;
            best_state = (model.store.clone(), protos.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    model.store = best_state.0;
    Ok((best_state.1, report))
}

/// Runs the encoder over a time-ordered sequence, carry starting from zero.
pub fn detect_sequence(model: &Fpe, data: &[FpeSample]) -> Result<Vec<FaultDetectionOutput>> {
    let mut carry: Option<Tensor> = None;
    let mut out = Vec::with_capacity(data.len());
    for s in data {
        let c = match carry.take() {
            Some(c) if c.rows() == s.window.m => c,
            _ => model.zero_carry(s.window.m),
        };
        let (det, next) = model.detect(&s.window, &s.schedule, &c)?;
        out.push(det);
        carry = Some(next);
    }
    Ok(out)
}
