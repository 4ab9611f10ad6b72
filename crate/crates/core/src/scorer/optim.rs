//! AdamW with linear warmup and cosine decay, and the shared training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{mean_nll, sft_step, Example, ScorerError, SlotScorer};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub seed: u64,
    /// Recorded for provenance only; the surrogate trains full-rank.
    pub lora_rank: usize,
    pub lora_alpha: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::sft()
    }
}

impl TrainConfig {
    pub const SFT_LR: f64 = 4e-4;
    pub const DPO_LR: f64 = 5e-6;
    pub const SIMPO_LR: f64 = 1e-6;

    fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            epochs: 3,
            batch_size: 128,
            adam_beta1: 0.8,
            adam_beta2: 0.99,
            adam_epsilon: 1e-8,
            weight_decay: 0.0,
            warmup_ratio: 0.1,
            seed: 0,
            lora_rank: 8,
            lora_alpha: 16,
        }
    }

    /// SP and CRC supervised fine-tuning.
    pub fn sft() -> Self {
        Self::with_lr(Self::SFT_LR)
    }

    pub fn dpo() -> Self {
        Self::with_lr(Self::DPO_LR)
    }

    pub fn simpo() -> Self {
        Self::with_lr(Self::SIMPO_LR)
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        let bad = |m: &str| Err(ScorerError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0 && self.weight_decay >= 0.0) {
            return bad("adam_epsilon must be positive and weight_decay non-negative");
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_items: usize) -> usize {
        n_items.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, n_items: usize) -> usize {
        self.epochs * self.steps_per_epoch(n_items)
    }

    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        (self.warmup_ratio * total_steps as f64).ceil() as usize
    }
}

/// Learning rate at optimizer step `step` (0-based): linear warmup from 0 to
/// `peak` over `warmup` steps, then cosine decay to 0 at `total`.
pub fn lr_at(step: usize, total: usize, warmup: usize, peak: f64) -> f64 {
    if step < warmup {
        return peak * step as f64 / warmup.max(1) as f64;
    }
    let progress = (step - warmup) as f64 / total.saturating_sub(warmup).max(1) as f64;
    peak * 0.5 * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n_params: usize, config: &TrainConfig) -> Self {
        Self {
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            epsilon: config.adam_epsilon,
            weight_decay: config.weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let decay = 1.0 - lr * self.weight_decay;
        for (((w, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            if lr == 0.0 {
                continue;
            }
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w = *w * decay - lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub steps: Vec<StepLog>,
    /// Mean NLL over the full training data after the last step.
    pub final_loss: f64,
}

/// Runs epochs of shuffled mini-batches. `batch_grad` returns the batch loss
/// and a dense gradient; `after_step` runs after each update.
pub(crate) fn optimize<F, H>(
    model: &mut SlotScorer,
    n_items: usize,
    config: &TrainConfig,
    mut batch_grad: F,
    mut after_step: H,
) -> Result<Vec<StepLog>, ScorerError>
where
    F: FnMut(&SlotScorer, &[usize]) -> Result<(f64, Vec<f64>), ScorerError>,
    H: FnMut(&SlotScorer, usize) -> Result<(), ScorerError>,
{
    config.validate()?;
    if n_items == 0 {
        return Err(ScorerError::EmptyData);
    }
    let total = config.total_steps(n_items);
    let warmup = config.warmup_steps(total);
    let mut adam = AdamW::new(model.params().len(), config);
    let mut shuffle_rng = rng(derive_seed(config.seed, &["shuffle"]));
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut logs = Vec::with_capacity(total);
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = batch_grad(model, batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ScorerError::NonFiniteLoss { step });
            }
            let lr = lr_at(step, total, warmup, config.learning_rate);
            adam.step(model.params_mut(), &grad, lr);
            if model.params().iter().any(|w| !w.is_finite()) {
                return Err(ScorerError::NonFiniteLoss { step });
            }
            logs.push(StepLog { step, loss, lr });
            after_step(model, step)?;
            step += 1;
        }
    }
    Ok(logs)
}

/// Supervised fine-tuning on `(features, targets)` examples.
pub fn train(model: &mut SlotScorer, data: &[Example], config: &TrainConfig) -> Result<TrainReport, ScorerError> {
    let steps = optimize(
        model,
        data.len(),
        config,
        |m, idx| {
            let batch: Vec<Example> = idx.iter().map(|&i| data[i].clone()).collect();
            sft_step(m, &batch)
        },
        |_, _| Ok(()),
    )?;
    let final_loss = mean_nll(model, data)?;
    if !final_loss.is_finite() {
        return Err(ScorerError::NonFiniteLoss { step: steps.len() });
    }
    Ok(TrainReport { steps, final_loss })
}
