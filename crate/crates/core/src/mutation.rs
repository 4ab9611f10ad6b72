//! Label mutation: manufactures rejected outputs for preference tuning by
//! replacing a random subset of gold label values with wrong ones.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Emotion, EmotionSample, LabelMap, Track};
use crate::seed::{derive_seed, rng};
use crate::templates::{format_sp_target, render_sp_input};

/// Largest number of labels a single mutation touches.
pub const MAX_MUTATIONS: usize = 5;

/// Probabilities of mutating 1..=5 labels, as printed (they sum to 0.999).
pub const PRINTED_MUTATION_PROBS: [f64; MAX_MUTATIONS] = [0.638, 0.261, 0.083, 0.016, 0.001];

pub const DEFAULT_REPS_A: usize = 5;
pub const DEFAULT_REPS_B: usize = 15;

pub fn default_reps(track: Track) -> usize {
    match track {
        Track::A => DEFAULT_REPS_A,
        Track::B => DEFAULT_REPS_B,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MutationError {
    #[error("mutation weights must be finite, non-negative and not all zero")]
    InvalidWeights,
    #[error("reps must be at least 1")]
    ZeroReps,
    #[error("sample `{0}` has no labels to mutate")]
    NoLabels(String),
}

/// Distribution over how many labels to mutate, renormalized to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationDistribution {
    probs: [f64; MAX_MUTATIONS],
}

impl MutationDistribution {
    pub fn new(weights: [f64; MAX_MUTATIONS]) -> Result<Self, MutationError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MutationError::InvalidWeights);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(MutationError::InvalidWeights);
        }
        Ok(Self {
            probs: weights.map(|w| w / total),
        })
    }

    pub fn probabilities(&self) -> &[f64; MAX_MUTATIONS] {
        &self.probs
    }

    /// Probabilities of k = 1..=min(5, label_count), renormalized over that range.
    /// Falls back to k = 1 when the feasible range carries no mass.
    pub fn truncated(&self, label_count: usize) -> Vec<f64> {
        let feasible = label_count.clamp(1, MAX_MUTATIONS);
        let head = &self.probs[..feasible];
        let mass: f64 = head.iter().sum();
        if mass <= 0.0 {
            let mut v = vec![0.0; feasible];
            v[0] = 1.0;
            return v;
        }
        head.iter().map(|p| p / mass).collect()
    }
}

impl Default for MutationDistribution {
    fn default() -> Self {
        Self::new(PRINTED_MUTATION_PROBS).expect("printed weights are valid")
    }
}

pub fn draw_mutation_count<R: Rng + ?Sized>(dist: &MutationDistribution, label_count: usize, rng: &mut R) -> usize {
    let weights = dist.truncated(label_count);
    if weights.len() == 1 {
        return 1;
    }
    let index = WeightedIndex::new(&weights).expect("truncated weights are a valid distribution");
    index.sample(rng) + 1
}

/// Replaces `k` distinct, uniformly chosen labels with a value drawn
/// uniformly from the track range minus the gold value. Returns the rejected
/// map and the mutated emotions in canonical order.
pub fn mutate_labels<R: Rng + ?Sized>(
    gold: &LabelMap,
    track: Track,
    k: usize,
    rng: &mut R,
) -> (LabelMap, Vec<Emotion>) {
    let emotions: Vec<Emotion> = gold.keys().copied().collect();
    let k = k.min(emotions.len());
    let mut picked: Vec<Emotion> = rand::seq::index::sample(rng, emotions.len(), k)
        .into_iter()
        .map(|i| emotions[i])
        .collect();
    let mut rejected = gold.clone();
    for &e in &picked {
        let g = gold[&e];
        let r = rng.random_range(0..track.max_value());
        let v = if r < g { r } else { r + 1 };
        rejected.insert(e, v);
    }
    picked.sort();
    (rejected, picked)
}

/// A chosen/rejected output pair for one SP prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    pub language: String,
    pub track: Track,
    pub text: String,
    pub chosen: LabelMap,
    pub rejected: LabelMap,
    pub mutated: Vec<Emotion>,
}

impl PreferencePair {
    pub fn prompt(&self) -> String {
        render_sp_input(self.track, &self.language, &self.text)
    }

    pub fn chosen_text(&self) -> String {
        format_sp_target(&self.chosen)
    }

    pub fn rejected_text(&self) -> String {
        format_sp_target(&self.rejected)
    }
}

/// `reps` mutated pairs per sample, ordered by sample then repetition.
pub fn build_preference_dataset(
    dataset: &[EmotionSample],
    track: Track,
    reps: usize,
    dist: &MutationDistribution,
    seed: u64,
) -> Result<Vec<PreferencePair>, MutationError> {
    if reps == 0 {
        return Err(MutationError::ZeroReps);
    }
    let per_sample: Vec<Result<Vec<PreferencePair>, MutationError>> = dataset
        .par_iter()
        .map(|sample| {
            if sample.values.is_empty() {
                return Err(MutationError::NoLabels(sample.id.clone()));
            }
            let mut rng = rng(derive_seed(seed, &["mutation", &sample.id]));
            Ok((0..reps)
                .map(|_| {
                    let k = draw_mutation_count(dist, sample.values.len(), &mut rng);
                    let (rejected, mutated) = mutate_labels(&sample.values, track, k, &mut rng);
                    PreferencePair {
                        id: sample.id.clone(),
                        language: sample.language.clone(),
                        track,
                        text: sample.text.clone(),
                        chosen: sample.values.clone(),
                        rejected,
                        mutated,
                    }
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(dataset.len() * reps);
    for chunk in per_sample {
        out.extend(chunk?);
    }
    Ok(out)
}
