use serde::{Deserialize, Serialize};

use super::model::{Seq2SeqModel, Tokens};
use crate::acoustic::AcousticSeq;
use crate::error::{contract, Error, Result};
use crate::tensor::{AdamConfig, Graph, ParamStore, Rng};

/// One training example: postprocessed tokens and the frames they should produce.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub id: String,
    pub tokens: Tokens,
    pub target: AcousticSeq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Linear learning-rate warmup length in steps.
    pub warmup: usize,
    pub clip: f64,
    /// Validation interval in steps; the final step is always evaluated.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 8,
            lr: 2e-3,
            warmup: 100,
            clip: 1.0,
            eval_every: 250,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch and eval_every must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite() && self.clip > 0.0) {
            return Err(Error::Config("lr and clip must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup {
            self.lr * (step + 1) as f64 / self.warmup as f64
        } else {
            self.lr
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqTraining {
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    /// `(step, teacher-forced validation L1)`.
    pub valid_l1: Vec<(usize, f64)>,
}

/// Mean teacher-forced L1 over `pairs`, without dropout.
pub fn validation_l1(model: &Seq2SeqModel, p: &ParamStore<f32>, pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(contract("validation set is empty"));
    }
    let mut total = 0.0;
    for pair in pairs {
        let mut g = Graph::new();
        let l = model.loss(&mut g, p, &pair.tokens, &pair.target, None)?;
        total += g.value(l.l1).item() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Trains `params` in place on random batches of `train`.
///
/// On a non-finite loss the step is discarded and a numeric error returned,
/// leaving `params` at the last finite state.
pub fn train_seq2seq(
    model: &Seq2SeqModel,
    params: &mut ParamStore<f32>,
    train: &[Pair],
    valid: &[Pair],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Seq2SeqTraining> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(contract("seq2seq training needs at least one pair"));
    }
    let mut rng = Rng::derive(seed, "s2s/train");
    let mut log = Seq2SeqTraining::default();
    for step in 0..cfg.steps {
        params.zero_grads();
        let mut step_loss = 0.0;
        for _ in 0..cfg.batch {
            let pair = &train[rng.below(train.len())];
            let mut g = Graph::new();
            let l = model.loss(&mut g, params, &pair.tokens, &pair.target, Some(&mut rng))?;
            let value = g.value(l.total).item() as f64;
            if !value.is_finite() {
                params.zero_grads();
                return Err(Error::Numeric(format!(
                    "seq2seq loss is {value} at step {step} on '{}'",
                    pair.id
                )));
            }
            step_loss += value / cfg.batch as f64;
            let scaled = g.scale(l.total, 1.0 / cfg.batch as f64)?;
            g.backward(scaled, params)?;
        }
        params.clip_grad_norm(cfg.clip);
        params.adam_step(&AdamConfig {
            lr: cfg.lr_at(step),
            ..AdamConfig::default()
        })?;
        log.losses.push(step_loss);
        if !valid.is_empty() && ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps) {
            log.valid_l1.push((step + 1, validation_l1(model, params, valid)?));
        }
    }
    Ok(log)
}
