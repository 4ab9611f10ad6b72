//! DPO and SimPO objectives over the slot scorer, and the preference-tuning loop.
//!
//! ```text
//! DPO:   -log σ( β [ (log πθ(y_w|x) - log πref(y_w|x)) - (log πθ(y_l|x) - log πref(y_l|x)) ] )
//! SimPO: -log σ( (β/|y_w|) log πθ(y_w|x) - (β/|y_l|) log πθ(y_l|x) - γ )
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mutation::PreferencePair;
use crate::scorer::optim::optimize;
use crate::scorer::{featurize, score_from_log_probs, FeatureVector, ScorerError, SlotScorer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefMethod {
    Dpo,
    Simpo,
}

impl fmt::Display for PrefMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrefMethod::Dpo => "dpo",
            PrefMethod::Simpo => "simpo",
        })
    }
}

impl FromStr for PrefMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dpo" => Ok(PrefMethod::Dpo),
            "simpo" => Ok(PrefMethod::Simpo),
            other => Err(format!("unknown preference method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefConfig {
    pub beta: f64,
    pub gamma: f64,
    pub train: TrainConfig,
}

impl PrefConfig {
    pub const DPO_BETA: f64 = 0.1;
    pub const SIMPO_BETA: f64 = 2.0;
    pub const SIMPO_GAMMA: f64 = 0.5;

    pub fn dpo() -> Self {
        Self {
            beta: Self::DPO_BETA,
            gamma: Self::SIMPO_GAMMA,
            train: TrainConfig::dpo(),
        }
    }

    pub fn simpo() -> Self {
        Self {
            beta: Self::SIMPO_BETA,
            gamma: Self::SIMPO_GAMMA,
            train: TrainConfig::simpo(),
        }
    }

    pub fn for_method(method: PrefMethod) -> Self {
        match method {
            PrefMethod::Dpo => Self::dpo(),
            PrefMethod::Simpo => Self::simpo(),
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(ScorerError::InvalidConfig("beta must be positive".into()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(ScorerError::InvalidConfig("gamma must be non-negative".into()));
        }
        self.train.validate()
    }
}

/// A preference pair prepared for a particular scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefExample {
    pub features: FeatureVector,
    pub chosen: Vec<u8>,
    pub rejected: Vec<u8>,
}

impl PrefExample {
    pub fn from_pair(model: &SlotScorer, pair: &PreferencePair) -> Result<Self, ScorerError> {
        Ok(Self {
            features: featurize(&pair.text, model.feature_dim()),
            chosen: model.sp_targets(&pair.chosen)?,
            rejected: model.sp_targets(&pair.rejected)?,
        })
    }
}

/// `-log σ(z)`, stable for large |z|.
pub fn neg_log_sigmoid(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `σ(z)`, stable for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn total(log_probs: &[f64], y: &[u8], arity: usize) -> f64 {
    score_from_log_probs(log_probs, y, arity).total_logprob
}

/// Policy log-probabilities of (chosen, rejected), with shape checks.
fn pair_logprobs(model: &SlotScorer, ex: &PrefExample) -> Result<(Vec<f64>, f64, f64), ScorerError> {
    model.logprob(&ex.features, &ex.chosen)?;
    model.logprob(&ex.features, &ex.rejected)?;
    let lp = model.log_probs(&ex.features);
    let c = total(&lp, &ex.chosen, model.arity());
    let r = total(&lp, &ex.rejected, model.arity());
    Ok((lp, c, r))
}

/// DPO implicit-reward margin `β[(Δ_w) - (Δ_l)]`.
pub fn dpo_margin(
    policy: &SlotScorer,
    reference: &SlotScorer,
    ex: &PrefExample,
    beta: f64,
) -> Result<f64, ScorerError> {
    if !policy.same_architecture(reference) {
        return Err(ScorerError::ArchitectureMismatch);
    }
    let (_, pc, pr) = pair_logprobs(policy, ex)?;
    let (_, rc, rr) = pair_logprobs(reference, ex)?;
    Ok(beta * ((pc - rc) - (pr - rr)))
}

/// SimPO length-normalized margin, without the γ offset.
pub fn simpo_margin(policy: &SlotScorer, ex: &PrefExample, beta: f64) -> Result<f64, ScorerError> {
    let (_, c, r) = pair_logprobs(policy, ex)?;
    Ok(simpo_reward_gap(ex, beta, c, r))
}

fn simpo_reward_gap(ex: &PrefExample, beta: f64, chosen: f64, rejected: f64) -> f64 {
    beta * chosen / ex.chosen.len() as f64 - beta * rejected / ex.rejected.len() as f64
}

fn add_pair_grad(
    model: &SlotScorer,
    ex: &PrefExample,
    log_probs: &[f64],
    chosen_scale: f64,
    rejected_scale: f64,
    grad: &mut [f64],
) {
    model.add_logprob_grad(&ex.features, log_probs, &ex.chosen, chosen_scale, grad);
    model.add_logprob_grad(&ex.features, log_probs, &ex.rejected, rejected_scale, grad);
}

/// DPO loss for one pair and its gradient with respect to the policy only.
pub fn dpo_loss(
    policy: &SlotScorer,
    reference: &SlotScorer,
    ex: &PrefExample,
    beta: f64,
) -> Result<(f64, Vec<f64>), ScorerError> {
    if !policy.same_architecture(reference) {
        return Err(ScorerError::ArchitectureMismatch);
    }
    let (_, rc, rr) = pair_logprobs(reference, ex)?;
    let mut grad = vec![0.0; policy.params().len()];
    let loss = dpo_accumulate(policy, ex, (rc, rr), beta, 1.0, &mut grad)?;
    Ok((loss, grad))
}

/// `reference` holds the frozen model's (chosen, rejected) log-probabilities.
fn dpo_accumulate(
    policy: &SlotScorer,
    ex: &PrefExample,
    reference: (f64, f64),
    beta: f64,
    weight: f64,
    grad: &mut [f64],
) -> Result<f64, ScorerError> {
    let (lp, c, r) = pair_logprobs(policy, ex)?;
    let z = beta * ((c - reference.0) - (r - reference.1));
    // dL/dz = -σ(-z)
    let dz = -sigmoid(-z) * weight;
    add_pair_grad(policy, ex, &lp, dz * beta, -dz * beta, grad);
    Ok(neg_log_sigmoid(z))
}

/// SimPO loss for one pair and its gradient.
pub fn simpo_loss(
    policy: &SlotScorer,
    ex: &PrefExample,
    beta: f64,
    gamma: f64,
) -> Result<(f64, Vec<f64>), ScorerError> {
    let mut grad = vec![0.0; policy.params().len()];
    let loss = simpo_accumulate(policy, ex, beta, gamma, 1.0, &mut grad)?;
    Ok((loss, grad))
}

fn simpo_accumulate(
    policy: &SlotScorer,
    ex: &PrefExample,
    beta: f64,
    gamma: f64,
    weight: f64,
    grad: &mut [f64],
) -> Result<f64, ScorerError> {
    if ex.chosen.is_empty() || ex.rejected.is_empty() {
        return Err(ScorerError::SlotMismatch(
            "preference outputs need at least one slot".into(),
        ));
    }
    let (lp, c, r) = pair_logprobs(policy, ex)?;
    let bw = beta / ex.chosen.len() as f64;
    let bl = beta / ex.rejected.len() as f64;
    let z = bw * c - bl * r - gamma;
    let dz = -sigmoid(-z) * weight;
    add_pair_grad(policy, ex, &lp, dz * bw, -dz * bl, grad);
    Ok(neg_log_sigmoid(z))
}

/// Pairs plus everything about them that stays fixed during tuning.
struct Prepared<'a> {
    pairs: &'a [PrefExample],
    /// Frozen (chosen, rejected) log-probabilities under the reference.
    reference: Vec<(f64, f64)>,
    /// Runs of consecutive pairs sharing one input, as `start..end`.
    groups: Vec<std::ops::Range<usize>>,
}

impl<'a> Prepared<'a> {
    fn new(reference: &SlotScorer, pairs: &'a [PrefExample]) -> Result<Self, ScorerError> {
        let mut refs = Vec::with_capacity(pairs.len());
        let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
        for (i, ex) in pairs.iter().enumerate() {
            if ex.chosen.is_empty() || ex.rejected.is_empty() {
                return Err(ScorerError::SlotMismatch(
                    "preference outputs need at least one slot".into(),
                ));
            }
            let (_, c, r) = pair_logprobs(reference, ex)?;
            refs.push((c, r));
            match groups.last_mut() {
                Some(g) if pairs[g.start].features == ex.features => g.end = i + 1,
                _ => groups.push(i..i + 1),
            }
        }
        Ok(Self {
            pairs,
            reference: refs,
            groups,
        })
    }
}

fn batch_loss(
    method: PrefMethod,
    policy: &SlotScorer,
    prepared: &Prepared,
    batch: &[usize],
    config: &PrefConfig,
) -> Result<(f64, Vec<f64>), ScorerError> {
    if batch.is_empty() {
        return Err(ScorerError::EmptyData);
    }
    let w = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; policy.params().len()];
    let mut loss = 0.0;
    for &i in batch {
        let ex = &prepared.pairs[i];
        loss += match method {
            PrefMethod::Dpo => dpo_accumulate(policy, ex, prepared.reference[i], config.beta, w, &mut grad)?,
            PrefMethod::Simpo => simpo_accumulate(policy, ex, config.beta, config.gamma, w, &mut grad)?,
        };
    }
    Ok((loss * w, grad))
}

/// Mean loss and gradient over a batch.
pub fn preference_batch(
    method: PrefMethod,
    policy: &SlotScorer,
    reference: &SlotScorer,
    batch: &[&PrefExample],
    config: &PrefConfig,
) -> Result<(f64, Vec<f64>), ScorerError> {
    if !policy.same_architecture(reference) {
        return Err(ScorerError::ArchitectureMismatch);
    }
    let owned: Vec<PrefExample> = batch.iter().map(|&e| e.clone()).collect();
    let prepared = Prepared::new(reference, &owned)?;
    let idx: Vec<usize> = (0..owned.len()).collect();
    batch_loss(method, policy, &prepared, &idx, config)
}

/// One row of the preference training curve. Row 0 is the starting policy;
/// row k follows the k-th optimizer update. Loss and margin are means over
/// the full pair set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefStep {
    pub step: usize,
    pub loss: f64,
    pub margin: f64,
    pub lr: f64,
    /// Mean log πθ(y_w|x); drifts freely under SimPO since no reference anchors it.
    pub chosen_logprob: f64,
    /// Fraction of pairs whose chosen output is the policy's argmax output.
    pub chosen_top1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefReport {
    pub method: PrefMethod,
    pub curve: Vec<PrefStep>,
}

impl PrefReport {
    pub fn initial_margin(&self) -> f64 {
        self.curve.first().map(|s| s.margin).unwrap_or(0.0)
    }

    pub fn final_margin(&self) -> f64 {
        self.curve.last().map(|s| s.margin).unwrap_or(0.0)
    }
}

fn argmax_slots(log_probs: &[f64], arity: usize) -> Vec<u8> {
    log_probs
        .chunks(arity)
        .map(|chunk| {
            let mut best = 0;
            for (v, &z) in chunk.iter().enumerate() {
                if z > chunk[best] {
                    best = v;
                }
            }
            best as u8
        })
        .collect()
}

fn evaluate(
    method: PrefMethod,
    policy: &SlotScorer,
    prepared: &Prepared,
    config: &PrefConfig,
    step: usize,
    lr: f64,
) -> PrefStep {
    let arity = policy.arity();
    let n = prepared.pairs.len() as f64;
    let (mut loss, mut margin, mut chosen_lp, mut top1) = (0.0, 0.0, 0.0, 0.0);
    for g in &prepared.groups {
        let lp = policy.log_probs(&prepared.pairs[g.start].features);
        let top = argmax_slots(&lp, arity);
        for i in g.clone() {
            let ex = &prepared.pairs[i];
            let c = total(&lp, &ex.chosen, arity);
            let r = total(&lp, &ex.rejected, arity);
            let (m, z) = match method {
                PrefMethod::Dpo => {
                    let (rc, rr) = prepared.reference[i];
                    let m = config.beta * ((c - rc) - (r - rr));
                    (m, m)
                }
                PrefMethod::Simpo => {
                    let m = simpo_reward_gap(ex, config.beta, c, r);
                    (m, m - config.gamma)
                }
            };
            loss += neg_log_sigmoid(z);
            margin += m;
            chosen_lp += c;
            if top == ex.chosen {
                top1 += 1.0;
            }
        }
    }
    PrefStep {
        step,
        loss: loss / n,
        margin: margin / n,
        lr,
        chosen_logprob: chosen_lp / n,
        chosen_top1: top1 / n,
    }
}

/// Preference-tunes a copy of `policy_init`. For DPO the untouched
/// `policy_init` is the frozen reference.
pub fn train_preference(
    policy_init: &SlotScorer,
    pairs: &[PrefExample],
    method: PrefMethod,
    config: &PrefConfig,
) -> Result<(SlotScorer, PrefReport), ScorerError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(ScorerError::EmptyData);
    }
    let prepared = Prepared::new(policy_init, pairs)?;
    let mut policy = policy_init.clone();
    let total = config.train.total_steps(pairs.len());
    let warmup = config.train.warmup_steps(total);
    let mut curve = vec![evaluate(method, &policy, &prepared, config, 0, 0.0)];
    optimize(
        &mut policy,
        pairs.len(),
        &config.train,
        |m, idx| batch_loss(method, m, &prepared, idx, config),
        |m, step| {
            let lr = crate::scorer::lr_at(step, total, warmup, config.train.learning_rate);
            let row = evaluate(method, m, &prepared, config, step + 1, lr);
            if !row.loss.is_finite() {
                return Err(ScorerError::NonFiniteLoss { step });
            }
            curve.push(row);
            Ok(())
        },
    )?;
    Ok((policy, PrefReport { method, curve }))
}
