use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use crate::autodiff::{Graph, ParamSet};
use crate::data::{resample_collocation, TrainSample};
use crate::error::{Error, Result};
use crate::physics::{total_loss, FieldModel, LossWeights};

/// Sample-weighted means of the loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub data: f64,
    pub physics: f64,
    pub parameter: f64,
    pub total: f64,
}

impl LossRecord {
    fn accumulate(&mut self, other: &LossRecord, weight: f64) {
        self.data += weight * other.data;
        self.physics += weight * other.physics;
        self.parameter += weight * other.parameter;
        self.total += weight * other.total;
    }

    fn is_finite(&self) -> bool {
        [self.data, self.physics, self.parameter, self.total].iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossRecord,
    pub val: Option<LossRecord>,
    /// Optimizer steps completed by the end of this epoch.
    pub steps: usize,
    /// Collocation points whose speed estimate hit the floor.
    pub clamped: usize,
}

/// Loss history of one run.
///
/// Wall time is kept out of the serialized form so repeated runs produce
/// identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Validation total at `best_epoch` (training total without a
    /// validation split).
    pub best_loss: f64,
    pub steps: usize,
    pub stopped_early: bool,
    pub checkpoint: Option<String>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Loss values of `batch` under the current weights, and the graph holding
/// them.
fn batch_loss(model: &dyn FieldModel, batch: &[&TrainSample], weights: &LossWeights) -> Result<(Graph, crate::physics::LossTerms, LossRecord)> {
    let mut g = Graph::new(2);
    let terms = total_loss(&mut g, model, batch, weights)?;
    let record = LossRecord {
        data: g.value(terms.data).item(),
        physics: g.value(terms.physics).item(),
        parameter: g.value(terms.parameter).item(),
        total: g.value(terms.total).item(),
    };
    Ok((g, terms, record))
}

/// Mean loss over `samples`, in fixed order and without updating weights.
pub fn evaluate_loss(model: &dyn FieldModel, samples: &[TrainSample], config: &TrainConfig) -> Result<LossRecord> {
    let mut acc = LossRecord::default();
    for chunk in samples.chunks(config.batch_size) {
        let batch: Vec<&TrainSample> = chunk.iter().collect();
        let (_, _, r) = batch_loss(model, &batch, &config.weights)?;
        acc.accumulate(&r, chunk.len() as f64 / samples.len() as f64);
    }
    Ok(acc)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Minimizes the weighted total loss with Adam.
///
/// The returned model carries the weights of the best epoch. On a
/// non-finite loss the weights of the best epoch so far are restored before
/// the error is returned.
pub fn train(model: &mut dyn FieldModel, train: &[TrainSample], val: &[TrainSample], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training split".into()));
    }
    let started = Instant::now();
    model.prepare(train)?;
    let mut samples = train.to_vec();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(model.params());
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut epochs = Vec::new();
    let mut steps = 0;
    let mut stale = 0;
    let mut stopped_early = false;
    let cap = config.max_steps.unwrap_or(usize::MAX);

    let restore = |model: &mut dyn FieldModel, best: &Option<(f64, usize, ParamSet)>| {
        if let Some((_, _, p)) = best {
            *model.params_mut() = p.clone();
        }
    };

    for epoch in 0..config.epochs {
        if steps >= cap {
            break;
        }
        if config.resample {
            resample_collocation(&mut samples, config.collocation, epoch_seed(config.seed, epoch));
        }
        order.shuffle(&mut rng);
        let mut acc = LossRecord::default();
        let mut seen = 0usize;
        let mut clamped = 0;
        for chunk in order.chunks(config.batch_size) {
            if steps >= cap {
                break;
            }
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let step = batch_loss(&*model, &batch, &config.weights).and_then(|(g, terms, record)| {
                if !record.is_finite() {
                    return Err(Error::NonFinite { op: "loss" });
                }
                let grads = g.backward(terms.total, model.params())?;
                Ok((grads, terms.clamped, record))
            });
            let (grads, n_clamped, record) = match step {
                Ok(s) => s,
                Err(e @ (Error::NonFinite { .. } | Error::NonFiniteGradient(_))) => {
                    restore(model, &best);
                    return Err(Error::Diverged {
                        epoch,
                        reason: format!("step {steps}: {e}"),
                    });
                }
                Err(e) => return Err(e),
            };
            if let Err(e) = adam_step(model.params_mut(), &grads, &mut adam, config) {
                restore(model, &best);
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("step {steps}: {e}"),
                });
            }
            acc.accumulate(&record, chunk.len() as f64);
            seen += chunk.len();
            clamped += n_clamped;
            steps += 1;
        }
        if seen == 0 {
            break;
        }
        let train_rec = LossRecord {
            data: acc.data / seen as f64,
            physics: acc.physics / seen as f64,
            parameter: acc.parameter / seen as f64,
            total: acc.total / seen as f64,
        };
        let val_rec = if val.is_empty() {
            None
        } else {
            Some(evaluate_loss(&*model, val, config)?)
        };
        let score = val_rec.map_or(train_rec.total, |r| r.total);
        if !score.is_finite() {
            restore(model, &best);
            return Err(Error::Diverged {
                epoch,
                reason: format!("non-finite validation loss {score}"),
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train: train_rec,
            val: val_rec,
            steps,
            clamped,
        });
        match &best {
            Some((b, _, _)) if score >= *b => stale += 1,
            _ => {
                best = Some((score, epoch, model.params().clone()));
                stale = 0;
            }
        }
        if stale >= config.patience {
            stopped_early = true;
            break;
        }
    }
    restore(model, &best);
    let (best_loss, best_epoch) = best.as_ref().map_or((f64::NAN, 0), |(l, e, _)| (*l, *e));
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_loss,
        steps,
        stopped_early,
        checkpoint: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
