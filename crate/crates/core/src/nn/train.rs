use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{bce_logit_grad, bce_loss};
use super::{Model, NnError, NnRng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Used only when a validation set is supplied.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 16,
            epochs: 100,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_patience: Some(10),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidSpec(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidSpec("batch size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }
}

/// A preprocessed input with its 0/1 target.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: Tensor,
    pub target: f64,
}

/// Mean-loss curves of a training run; `epoch_seconds` is wall-clock.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub stopping_rule: String,
    pub epoch_seconds: Vec<f64>,
}

/// Forward and backward over `batch`, gradients averaged, one Adam step.
/// Returns the mean batch loss.
pub fn backward_and_adam_step(
    model: &mut Model,
    state: &mut AdamState,
    batch: &[&Sample],
    cfg: &AdamConfig,
    rng: &mut NnRng,
) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut grads = model.zero_grads();
    let mut loss = 0.0;
    for s in batch {
        let trace = model.forward(&s.input, Some(rng))?;
        loss += bce_loss(trace.probability, s.target);
        model.backward(&trace, bce_logit_grad(trace.probability, s.target), &mut grads);
    }
    let scale = 1.0 / batch.len() as f64;
    for (g, block) in grads.iter_mut().zip(model.blocks()) {
        g.iter_mut().for_each(|v| *v *= scale);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteGradient {
                block: block.name.clone(),
                batch_ids: batch.iter().map(|s| s.id.clone()).collect(),
            });
        }
    }
    state.update(&mut model.blocks_mut(), &grads, cfg)?;
    Ok(loss * scale)
}

/// Evaluation-mode mean loss.
pub fn mean_loss(model: &Model, samples: &[Sample]) -> Result<f64, NnError> {
    let mut total = 0.0;
    for s in samples {
        total += bce_loss(model.predict(&s.input)?, s.target);
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Owns a model under training together with its optimizer state and generator.
pub struct Trainer {
    pub model: Model,
    pub state: AdamState,
    config: TrainConfig,
    rng: NnRng,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self, NnError> {
        config.validate()?;
        let state = AdamState::new(model.blocks().iter().map(|b| b.values.len()));
        let mut rng = NnRng::seed_from_u64(config.seed);
        // initialization draws from stream 0 of the same seed
        rng.set_stream(1);
        Ok(Self { model, state, config, rng })
    }

    pub fn step(&mut self, batch: &[&Sample]) -> Result<f64, NnError> {
        backward_and_adam_step(&mut self.model, &mut self.state, batch, &self.config.adam(), &mut self.rng)
    }

    /// Shuffled mini-batch epochs. With a validation set and a patience, stops
    /// when validation loss has not improved for `patience` epochs and restores
    /// the best parameters.
    pub fn fit(&mut self, train: &[Sample], val: Option<&[Sample]>) -> Result<TrainHistory, NnError> {
        if train.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let patience = val.filter(|v| !v.is_empty()).and(self.config.early_stop_patience);
        let mut history = TrainHistory {
            stopping_rule: match patience {
                Some(p) => format!("early stopping on validation loss, patience {p}, max {} epochs", self.config.epochs),
                None => format!("fixed {} epochs", self.config.epochs),
            },
            ..Default::default()
        };
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut best: Option<(f64, Model)> = None;
        let mut since_best = 0;
        for epoch in 0..self.config.epochs {
            let started = Instant::now();
            order.shuffle(&mut self.rng);
            let mut total = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
                total += self.step(&batch)? * batch.len() as f64;
            }
            history.epoch_losses.push(total / train.len() as f64);
            history.epoch_seconds.push(started.elapsed().as_secs_f64());
            history.epochs_run = epoch + 1;

            if let (Some(p), Some(val)) = (patience, val) {
                let vl = mean_loss(&self.model, val)?;
                history.val_losses.push(vl);
                if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                    best = Some((vl, self.model.clone()));
                    history.best_epoch = Some(epoch + 1);
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= p {
                        history.stopped_early = true;
                        break;
                    }
                }
            }
        }
        if let Some((_, m)) = best {
            self.model = m;
        }
        Ok(history)
    }
}
