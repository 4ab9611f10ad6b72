//! Surrogate scorer: a per-slot softmax model over structured label outputs.
//!
//! A structured output (the SP label string, or the two CRC conversation
//! values) factorizes into independent slots. Template tokens are fixed, so
//! they carry probability 1 and the sequence log-probability is the sum of
//! per-slot log-softmax values:
//!
//! ```text
//! log π(y|x) = Σ_s log softmax(W[s] · x)[y_s]
//! ```
//!
//! The slot count stands in for the sequence length |y|.

pub mod checkpoint;
pub mod features;
pub mod optim;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Emotion, LabelMap, LabelSet, Track};
use crate::seed::{rng, Rng};
use crate::templates::{format_sp_target, parse_crc_output, parse_sp_output, Prediction, PromptInstance, PromptTask};

pub use features::{crc_features, crc_input_dim, featurize, FeatureVector, DEFAULT_FEATURE_DIM};
pub use optim::{lr_at, train, AdamW, StepLog, TrainConfig, TrainReport};

#[derive(Debug, Error, PartialEq)]
pub enum ScorerError {
    #[error("output does not match the scorer's slots: {0}")]
    SlotMismatch(String),
    #[error("policy and reference scorers have different architectures")]
    ArchitectureMismatch,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("operation requires an SP scorer, got {0}")]
    WrongTask(PromptTask),
    #[error("empty training data")]
    EmptyData,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// What a slot models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Emotion(Emotion),
    Conv1,
    Conv2,
}

/// Log-probabilities of one structured output.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOutput {
    pub per_slot_logprob: Vec<f64>,
    pub total_logprob: f64,
    pub slot_count: usize,
}

/// Features paired with per-slot target values.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub targets: Vec<u8>,
}

impl Example {
    /// Recovers features and slot targets from a rendered training instance.
    pub fn from_instance(model: &SlotScorer, instance: &PromptInstance) -> Result<Self, ScorerError> {
        if instance.task != model.task {
            return Err(ScorerError::WrongTask(instance.task));
        }
        let track = model.track();
        let texts = &instance.meta.texts;
        if model.task.is_crc() {
            let focus = instance
                .meta
                .focus
                .ok_or_else(|| ScorerError::SlotMismatch("CRC instance has no focus emotion".into()))?;
            if texts.len() != 2 {
                return Err(ScorerError::SlotMismatch("CRC instance needs two texts".into()));
            }
            let out = parse_crc_output(&instance.target, track)
                .map_err(|e| ScorerError::SlotMismatch(format!("unparseable CRC target: {}", e.0)))?;
            Ok(Self {
                features: crc_features(&texts[0], &texts[1], focus, model.feature_dim),
                targets: vec![out.v1, out.v2],
            })
        } else {
            let text = texts
                .first()
                .ok_or_else(|| ScorerError::SlotMismatch("SP instance has no text".into()))?;
            let label_set =
                LabelSet::new("", model.emotions()).map_err(|e| ScorerError::SlotMismatch(e.to_string()))?;
            let parsed = parse_sp_output(&instance.target, &label_set, track);
            if !parsed.is_ok() {
                return Err(ScorerError::SlotMismatch(format!(
                    "unparseable SP target `{}`",
                    instance.target
                )));
            }
            Ok(Self {
                features: featurize(text, model.feature_dim),
                targets: model.sp_targets(&parsed.values)?,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotScorer {
    task: PromptTask,
    feature_dim: usize,
    input_dim: usize,
    slots: Vec<Slot>,
    arity: usize,
    // Row-major [slot][value][input_dim].
    weights: Vec<f64>,
}

impl SlotScorer {
    /// Zero-initialized SP scorer with one slot per label-set emotion.
    pub fn sp(track: Track, label_set: &LabelSet, feature_dim: usize) -> Self {
        let slots = label_set.emotions().iter().map(|&e| Slot::Emotion(e)).collect();
        Self::zeros(PromptTask::sp(track), feature_dim, feature_dim, slots, track.arity())
    }

    /// Zero-initialized CRC scorer with slots for the two conversations.
    pub fn crc(track: Track, feature_dim: usize) -> Self {
        Self::zeros(
            PromptTask::crc(track),
            feature_dim,
            crc_input_dim(feature_dim),
            vec![Slot::Conv1, Slot::Conv2],
            track.arity(),
        )
    }

    fn zeros(task: PromptTask, feature_dim: usize, input_dim: usize, slots: Vec<Slot>, arity: usize) -> Self {
        let weights = vec![0.0; slots.len() * arity * input_dim];
        Self {
            task,
            feature_dim,
            input_dim,
            slots,
            arity,
            weights,
        }
    }

    pub(crate) fn from_parts(
        task: PromptTask,
        feature_dim: usize,
        slots: Vec<Slot>,
        weights: Vec<f64>,
    ) -> Result<Self, ScorerError> {
        let input_dim = if task.is_crc() {
            crc_input_dim(feature_dim)
        } else {
            feature_dim
        };
        let arity = task.track().arity();
        if weights.len() != slots.len() * arity * input_dim {
            return Err(ScorerError::SlotMismatch(format!(
                "expected {} weights, found {}",
                slots.len() * arity * input_dim,
                weights.len()
            )));
        }
        Ok(Self {
            task,
            feature_dim,
            input_dim,
            slots,
            arity,
            weights,
        })
    }

    pub fn task(&self) -> PromptTask {
        self.task
    }

    pub fn track(&self) -> Track {
        self.task.track()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn params(&self) -> &[f64] {
        &self.weights
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn same_architecture(&self, other: &SlotScorer) -> bool {
        self.task == other.task
            && self.feature_dim == other.feature_dim
            && self.slots == other.slots
            && self.arity == other.arity
    }

    /// SP label set covered by this scorer (empty for CRC scorers).
    pub fn emotions(&self) -> Vec<Emotion> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                Slot::Emotion(e) => Some(*e),
                _ => None,
            })
            .collect()
    }

    fn row(&self, slot: usize, value: usize) -> usize {
        (slot * self.arity + value) * self.input_dim
    }

    fn check_features(&self, x: &FeatureVector) -> Result<(), ScorerError> {
        match x.max_index() {
            Some(i) if i as usize >= self.input_dim => Err(ScorerError::SlotMismatch(format!(
                "feature index {i} outside input width {}",
                self.input_dim
            ))),
            _ => Ok(()),
        }
    }

    /// Raw logits, `[slot][value]` flattened.
    pub fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.slots.len() * self.arity);
        for s in 0..self.slots.len() {
            for v in 0..self.arity {
                let row = self.row(s, v);
                out.push(x.dot(&self.weights[row..row + self.input_dim]));
            }
        }
        out
    }

    /// Per-slot log-softmax, `[slot][value]` flattened.
    pub fn log_probs(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = self.logits(x);
        for chunk in z.chunks_mut(self.arity) {
            let m = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + chunk.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for v in chunk.iter_mut() {
                *v -= lse;
            }
        }
        z
    }

    fn check_targets(&self, y: &[u8]) -> Result<(), ScorerError> {
        if y.len() != self.slots.len() {
            return Err(ScorerError::SlotMismatch(format!(
                "{} values for {} slots",
                y.len(),
                self.slots.len()
            )));
        }
        if let Some(v) = y.iter().find(|&&v| v as usize >= self.arity) {
            return Err(ScorerError::SlotMismatch(format!(
                "value {v} outside arity {}",
                self.arity
            )));
        }
        Ok(())
    }

    pub fn logprob(&self, x: &FeatureVector, y: &[u8]) -> Result<ScoredOutput, ScorerError> {
        self.check_targets(y)?;
        self.check_features(x)?;
        Ok(score_from_log_probs(&self.log_probs(x), y, self.arity))
    }

    /// Maps an SP label map onto slot order.
    pub fn sp_targets(&self, values: &LabelMap) -> Result<Vec<u8>, ScorerError> {
        if self.task.is_crc() {
            return Err(ScorerError::WrongTask(self.task));
        }
        if values.len() != self.slots.len() {
            return Err(ScorerError::SlotMismatch(format!(
                "{} labels for {} slots",
                values.len(),
                self.slots.len()
            )));
        }
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Emotion(e) => values
                    .get(e)
                    .copied()
                    .ok_or_else(|| ScorerError::SlotMismatch(format!("missing value for {e}"))),
                _ => unreachable!("SP scorers only hold emotion slots"),
            })
            .collect()
    }

    pub fn logprob_labels(&self, x: &FeatureVector, y: &LabelMap) -> Result<ScoredOutput, ScorerError> {
        self.logprob(x, &self.sp_targets(y)?)
    }

    /// Adds `scale · ∇θ log π(y|x)` into `grad`, given precomputed `log_probs`.
    pub(crate) fn add_logprob_grad(
        &self,
        x: &FeatureVector,
        log_probs: &[f64],
        y: &[u8],
        scale: f64,
        grad: &mut [f64],
    ) {
        for (s, &ys) in y.iter().enumerate() {
            for v in 0..self.arity {
                let p = log_probs[s * self.arity + v].exp();
                let coef = scale * (if v == ys as usize { 1.0 } else { 0.0 } - p);
                if coef == 0.0 {
                    continue;
                }
                let row = self.row(s, v);
                for &(f, xf) in x.entries() {
                    grad[row + f as usize] += coef * xf;
                }
            }
        }
    }

    /// Per-slot argmax; ties go to the smaller value.
    pub fn predict_slots(&self, x: &FeatureVector) -> Vec<u8> {
        self.logits(x)
            .chunks(self.arity)
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

    /// SP prediction. Always well-formed; see [`FaultInjector`] for corrupted outputs.
    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction, ScorerError> {
        if self.task.is_crc() {
            return Err(ScorerError::WrongTask(self.task));
        }
        let values: LabelMap = self.emotions().into_iter().zip(self.predict_slots(x)).collect();
        Ok(Prediction {
            id: String::new(),
            raw: format_sp_target(&values),
            values,
            status: crate::templates::ParseStatus::Ok,
        })
    }
}

pub(crate) fn score_from_log_probs(log_probs: &[f64], y: &[u8], arity: usize) -> ScoredOutput {
    let per_slot_logprob: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(s, &v)| log_probs[s * arity + v as usize])
        .collect();
    ScoredOutput {
        total_logprob: per_slot_logprob.iter().sum(),
        slot_count: y.len(),
        per_slot_logprob,
    }
}

/// Mean negative log-likelihood of a batch and its exact gradient.
pub fn sft_step(model: &SlotScorer, batch: &[Example]) -> Result<(f64, Vec<f64>), ScorerError> {
    if batch.is_empty() {
        return Err(ScorerError::EmptyData);
    }
    let mut grad = vec![0.0; model.params().len()];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        model.check_targets(&ex.targets)?;
        model.check_features(&ex.features)?;
        let lp = model.log_probs(&ex.features);
        loss -= score_from_log_probs(&lp, &ex.targets, model.arity).total_logprob;
        model.add_logprob_grad(&ex.features, &lp, &ex.targets, -scale, &mut grad);
    }
    Ok((loss * scale, grad))
}

/// Mean NLL over `data` without a gradient.
pub fn mean_nll(model: &SlotScorer, data: &[Example]) -> Result<f64, ScorerError> {
    if data.is_empty() {
        return Err(ScorerError::EmptyData);
    }
    let mut total = 0.0;
    for ex in data {
        total -= model.logprob(&ex.features, &ex.targets)?.total_logprob;
    }
    Ok(total / data.len() as f64)
}

/// Corrupts predictions with probability `p`, standing in for the formatting
/// failures a generative model can produce. Corrupted outputs go back through
/// the SP parser and come out malformed.
#[derive(Debug, Clone)]
pub struct FaultInjector {
    p: f64,
    rng: Rng,
}

impl FaultInjector {
    pub fn new(p: f64, seed: u64) -> Self {
        Self {
            p: p.clamp(0.0, 1.0),
            rng: rng(seed),
        }
    }

    pub fn apply(&mut self, prediction: Prediction, label_set: &LabelSet, track: Track) -> Prediction {
        if !self.rng.random_bool(self.p) {
            return prediction;
        }
        let body = prediction.raw.trim_end().trim_end_matches('.');
        let corrupted = format!("{body}, ");
        parse_sp_output(&corrupted, label_set, track).with_id(prediction.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::ParseStatus;

    fn eng5() -> LabelSet {
        LabelSet::new(
            "eng",
            [
                Emotion::Anger,
                Emotion::Fear,
                Emotion::Joy,
                Emotion::Sadness,
                Emotion::Surprise,
            ],
        )
        .unwrap()
    }

    fn random_model(track: Track, dim: usize, seed: u64) -> SlotScorer {
        let mut m = SlotScorer::sp(track, &eng5(), dim);
        let mut r = rng(seed);
        for w in m.params_mut() {
            *w = r.random_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn zero_model_is_uniform() {
        let x = featurize("hello there", 64);
        let a = SlotScorer::sp(Track::A, &eng5(), 64);
        let out = a.logprob(&x, &[0, 1, 0, 1, 1]).unwrap();
        assert!((out.total_logprob - 5.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((out.total_logprob + 3.4657359027997265).abs() < 1e-12);
        assert_eq!(out.slot_count, 5);
        let b = SlotScorer::sp(Track::B, &eng5(), 64);
        let out = b.logprob(&x, &[3, 2, 1, 0, 0]).unwrap();
        assert!((out.total_logprob - 5.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn slots_are_normalized() {
        let m = random_model(Track::B, 32, 1);
        let x = featurize("some words here and there", 32);
        for chunk in m.log_probs(&x).chunks(4) {
            let s: f64 = chunk.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(chunk.iter().all(|&v| v <= 0.0));
        }
    }

    #[test]
    fn slot_mismatch() {
        let m = SlotScorer::sp(Track::A, &eng5(), 16);
        let x = featurize("a", 16);
        assert!(matches!(m.logprob(&x, &[0, 1]), Err(ScorerError::SlotMismatch(_))));
        assert!(matches!(
            m.logprob(&x, &[0, 1, 0, 0, 2]),
            Err(ScorerError::SlotMismatch(_))
        ));
        let wide = FeatureVector::from_entries(vec![(0, 1.0), (100, 1.0)]);
        assert!(matches!(m.logprob(&wide, &[0; 5]), Err(ScorerError::SlotMismatch(_))));
    }

    #[test]
    fn zero_model_sft_loss_is_five_ln2() {
        let m = SlotScorer::sp(Track::A, &eng5(), 64);
        let batch: Vec<Example> = ["a b", "c", "d e f"]
            .iter()
            .enumerate()
            .map(|(i, t)| Example {
                features: featurize(t, 64),
                targets: vec![(i % 2) as u8, 0, 1, 0, 1],
            })
            .collect();
        let (loss, _) = sft_step(&m, &batch).unwrap();
        assert!((loss - 5.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(sft_step(&m, &[]), Err(ScorerError::EmptyData));
    }

    #[test]
    fn sft_gradient_matches_finite_differences() {
        let dim = 32;
        let model = random_model(Track::B, dim, 2);
        let batch: Vec<Example> = (0..4)
            .map(|i| Example {
                features: featurize(&format!("w{i} shared w{}", i + 1), dim),
                targets: vec![i as u8 % 4, 1, 2, 3, 0],
            })
            .collect();
        let (_, grad) = sft_step(&model, &batch).unwrap();
        let h = 1e-4;
        let mut r = rng(3);
        // Only coordinates touched by the batch have a non-trivial gradient.
        let touched: Vec<usize> = (0..grad.len()).filter(|&i| grad[i].abs() > 1e-6).collect();
        for _ in 0..20 {
            let i = touched[r.random_range(0..touched.len())];
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let fd = (sft_step(&plus, &batch).unwrap().0 - sft_step(&minus, &batch).unwrap().0) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-12);
            assert!(rel < 1e-5, "coord {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn one_step_descent_lowers_loss() {
        let mut model = SlotScorer::sp(Track::A, &eng5(), 64);
        let batch = vec![Example {
            features: featurize("i won the lottery", 64),
            targets: vec![0, 0, 1, 0, 1],
        }];
        let (before, grad) = sft_step(&model, &batch).unwrap();
        for (w, g) in model.params_mut().iter_mut().zip(&grad) {
            *w -= 0.1 * g;
        }
        let (after, _) = sft_step(&model, &batch).unwrap();
        assert!(after < before);
    }

    #[test]
    fn zero_model_predicts_zeros() {
        let m = SlotScorer::sp(Track::B, &eng5(), 64);
        let p = m.predict(&featurize("anything", 64)).unwrap();
        assert!(p.values.values().all(|&v| v == 0));
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.raw, "joy: 0, sadness: 0, fear: 0, anger: 0, surprise: 0.");
        let crc = SlotScorer::crc(Track::A, 8);
        assert_eq!(crc.predict_slots(&featurize("x", 8)), vec![0, 0]);
        assert!(crc.predict(&featurize("x", 8)).is_err());
    }

    #[test]
    fn argmax_is_shift_invariant() {
        let mut m = random_model(Track::B, 16, 9);
        let x = featurize("alpha beta", 16);
        let before = m.predict_slots(&x);
        // Adding c to the bias of every value in slot 2 shifts that slot's logits by c.
        for v in 0..4 {
            let row = m.row(2, v);
            m.params_mut()[row] += 7.5;
        }
        assert_eq!(m.predict_slots(&x), before);
    }

    #[test]
    fn fault_injection_produces_malformed() {
        let m = SlotScorer::sp(Track::A, &eng5(), 16);
        let p = m.predict(&featurize("x", 16)).unwrap().with_id("q");
        let mut always = FaultInjector::new(1.0, 0);
        let bad = always.apply(p.clone(), &eng5(), Track::A);
        assert_eq!(bad.status, ParseStatus::Malformed);
        assert_eq!(bad.id, "q");
        let mut never = FaultInjector::new(0.0, 0);
        assert_eq!(never.apply(p.clone(), &eng5(), Track::A), p);
    }

    #[test]
    fn crc_scorer_shape() {
        let m = SlotScorer::crc(Track::B, 16);
        assert_eq!(m.slot_count(), 2);
        assert_eq!(m.input_dim(), 2 * 16 + 6);
        let x = crc_features("a", "b", Emotion::Fear, 16);
        let out = m.logprob(&x, &[3, 1]).unwrap();
        assert!((out.total_logprob - 2.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn examples_from_rendered_instances() {
        use crate::corpus::EmotionSample;
        use crate::pairgen::ContrastivePair;
        use crate::templates::{render_crc, render_sp, TestPosition};
        let ls = eng5();
        let mk = |id: &str, text: &str, v: [u8; 5]| EmotionSample {
            id: id.into(),
            language: "eng".into(),
            track: Track::B,
            text: text.into(),
            values: ls.emotions().iter().copied().zip(v).collect(),
        };
        let a = mk("a", "calm morning", [0, 1, 2, 3, 0]);
        let b = mk("b", "angry night", [3, 0, 0, 1, 2]);
        let sp = SlotScorer::sp(Track::B, &ls, 64);
        let ex = Example::from_instance(&sp, &render_sp(&a)).unwrap();
        assert_eq!(ex.targets, vec![0, 1, 2, 3, 0]);
        assert_eq!(ex.features, featurize("calm morning", 64));

        let crc = SlotScorer::crc(Track::B, 64);
        let pair = ContrastivePair::new(Emotion::Anger, a.clone(), b.clone()).unwrap();
        let second = Example::from_instance(&crc, &render_crc(&pair, TestPosition::Second).unwrap()).unwrap();
        assert_eq!(second.targets, vec![0, 3]);
        assert_eq!(
            second.features,
            crc_features("calm morning", "angry night", Emotion::Anger, 64)
        );
        let first = Example::from_instance(&crc, &render_crc(&pair, TestPosition::First).unwrap()).unwrap();
        assert_eq!(first.targets, vec![3, 0]);
        assert!(matches!(
            Example::from_instance(&sp, &render_crc(&pair, TestPosition::First).unwrap()),
            Err(ScorerError::WrongTask(_))
        ));
    }
}
