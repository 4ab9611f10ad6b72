//! Contrastive pair generation for CRC training.
//!
//! For each emotion, ordered pairs of distinct samples are drawn uniformly
//! without replacement up to a per-label cap. Each pair carries a contrast
//! summary taken from a fixed phrase table.

use std::cmp::Ordering;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Dataset, Emotion, EmotionSample, Track};
use crate::seed::{derive_seed, rng};
use crate::templates::{fill, render_crc, PromptInstance, TemplateError, TestPosition};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastivePair {
    pub focus: Emotion,
    pub s1: EmotionSample,
    pub s2: EmotionSample,
    pub v1: u8,
    pub v2: u8,
    pub summary: String,
}

impl ContrastivePair {
    pub fn new(focus: Emotion, s1: EmotionSample, s2: EmotionSample) -> Result<Self, PairGenError> {
        if s1.track != s2.track {
            return Err(PairGenError::TrackMismatch);
        }
        let v1 = s1.value(focus).ok_or(PairGenError::FocusMissing(focus))?;
        let v2 = s2.value(focus).ok_or(PairGenError::FocusMissing(focus))?;
        let summary = summarize_values(s1.track, focus, v1, v2);
        Ok(Self {
            focus,
            s1,
            s2,
            v1,
            v2,
            summary,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairGenConfig {
    pub cap_per_label: usize,
    pub seed: u64,
}

impl PairGenConfig {
    pub const DEFAULT_CAP_A: usize = 3000;
    pub const DEFAULT_CAP_B: usize = 6000;

    pub fn for_track(track: Track, seed: u64) -> Self {
        let cap_per_label = match track {
            Track::A => Self::DEFAULT_CAP_A,
            Track::B => Self::DEFAULT_CAP_B,
        };
        Self { cap_per_label, seed }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PairGenError {
    #[error("need at least 2 samples labelled for {focus}, found {found}")]
    TooFewSamples { focus: Emotion, found: usize },
    #[error("pair cap must be at least 1")]
    ZeroCap,
    #[error("paired samples belong to different tracks")]
    TrackMismatch,
    #[error("focus emotion {0} missing from a paired sample")]
    FocusMissing(Emotion),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

// Keyed by (track, sign of v1 - v2, v1 present, v2 present). `{e}` is the focus emotion.
const PHRASES: &[(Track, Ordering, bool, bool, &str)] = &[
    (
        Track::A,
        Ordering::Greater,
        true,
        false,
        "the speaker in Conversation1 expresses {e} while the speaker in Conversation2 does not",
    ),
    (
        Track::A,
        Ordering::Less,
        false,
        true,
        "the speaker in Conversation2 expresses {e} while the speaker in Conversation1 does not",
    ),
    (
        Track::A,
        Ordering::Equal,
        true,
        true,
        "both conversations show the same {e}, as both speakers express it",
    ),
    (
        Track::A,
        Ordering::Equal,
        false,
        false,
        "both conversations show the same absence of {e}, as neither speaker expresses it",
    ),
    (
        Track::B,
        Ordering::Greater,
        true,
        false,
        "the speaker in Conversation1 expresses {e} while the speaker in Conversation2 shows no {e}",
    ),
    (
        Track::B,
        Ordering::Greater,
        true,
        true,
        "the speaker in Conversation1 expresses {e} with a higher intensity than the speaker in Conversation2",
    ),
    (
        Track::B,
        Ordering::Less,
        false,
        true,
        "the speaker in Conversation2 expresses {e} while the speaker in Conversation1 shows no {e}",
    ),
    (
        Track::B,
        Ordering::Less,
        true,
        true,
        "the speaker in Conversation2 expresses {e} with a higher intensity than the speaker in Conversation1",
    ),
    (
        Track::B,
        Ordering::Equal,
        true,
        true,
        "both conversations show the same intensity of {e}",
    ),
    (
        Track::B,
        Ordering::Equal,
        false,
        false,
        "both conversations show the same absence of {e}, as neither speaker expresses it",
    ),
];

/// Contrast summary for focus values `(v1, v2)` in rendered order.
pub fn summarize_values(track: Track, focus: Emotion, v1: u8, v2: u8) -> String {
    let key = (track, v1.cmp(&v2), v1 > 0, v2 > 0);
    let phrase = PHRASES
        .iter()
        .find(|(t, o, p1, p2, _)| (*t, *o, *p1, *p2) == key)
        .map(|row| row.4)
        .expect("phrase table covers every in-range value pair");
    fill(phrase, &[("e", focus.name())])
}

pub fn summarize_contrast(pair: &ContrastivePair) -> String {
    summarize_values(pair.s1.track, pair.focus, pair.v1, pair.v2)
}

/// Number of pairs [`sample_pairs`] yields for `usable` samples under `cap`.
pub fn pair_count(usable: usize, cap: usize) -> usize {
    cap.min(usable.saturating_mul(usable.saturating_sub(1)))
}

/// Draws `min(cap, n(n-1))` distinct ordered pairs of distinct samples that
/// carry a value for `focus`. The seed for each label is derived from the
/// config seed and the label name.
pub fn sample_pairs(
    dataset: &[EmotionSample],
    focus: Emotion,
    config: &PairGenConfig,
) -> Result<Vec<ContrastivePair>, PairGenError> {
    if config.cap_per_label == 0 {
        return Err(PairGenError::ZeroCap);
    }
    let usable: Vec<&EmotionSample> = dataset.iter().filter(|s| s.value(focus).is_some()).collect();
    let n = usable.len();
    if n < 2 {
        return Err(PairGenError::TooFewSamples { focus, found: n });
    }
    let total = n * (n - 1);
    let take = pair_count(n, config.cap_per_label);
    let mut rng = rng(derive_seed(config.seed, &[focus.name()]));
    rand::seq::index::sample(&mut rng, total, take)
        .into_iter()
        .map(|k| {
            // k enumerates ordered pairs (a, b) with a != b.
            let a = k / (n - 1);
            let r = k % (n - 1);
            let b = if r < a { r } else { r + 1 };
            ContrastivePair::new(focus, usable[a].clone(), usable[b].clone())
        })
        .collect()
}

/// Renders CRC training instances for every emotion of the label set, in
/// canonical emotion order. Training prompts keep pair order (test sample second).
pub fn build_crc_training_set(dataset: &Dataset, config: &PairGenConfig) -> Result<Vec<PromptInstance>, PairGenError> {
    let per_label: Vec<Result<Vec<PromptInstance>, PairGenError>> = dataset
        .label_set
        .emotions()
        .par_iter()
        .map(|&focus| {
            sample_pairs(&dataset.samples, focus, config)?
                .iter()
                .map(|p| render_crc(p, TestPosition::Second).map_err(PairGenError::from))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for chunk in per_label {
        out.extend(chunk?);
    }
    Ok(out)
}
