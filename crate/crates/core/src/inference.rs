//! Direct SP inference and anchored CRC voting.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Emotion, EmotionSample, LabelMap, LabelSet, Track};
use crate::scorer::{crc_features, featurize, ScorerError, SlotScorer};
use crate::seed::{derive_seed, rng};
use crate::templates::{format_sp_target, ParseStatus, Prediction, PromptTask, TestPosition};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("no anchors with a value for {0}")]
    NoAnchors(Emotion),
    #[error("vote count must be at least 1")]
    ZeroVotes,
    #[error("sample `{id}` has no value for {emotion}")]
    FocusMissing { id: String, emotion: Emotion },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteConfig {
    pub n: usize,
    pub seed: u64,
}

impl VoteConfig {
    pub const DEFAULT_N_A: usize = 3;
    pub const DEFAULT_N_B: usize = 7;

    pub fn for_track(track: Track, seed: u64) -> Self {
        let n = match track {
            Track::A => Self::DEFAULT_N_A,
            Track::B => Self::DEFAULT_N_B,
        };
        Self { n, seed }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.n == 0 {
            return Err(InferenceError::ZeroVotes);
        }
        Ok(())
    }
}

/// Counts per value, ascending by value.
pub fn tally(votes: &[u8]) -> BTreeMap<u8, usize> {
    let mut t = BTreeMap::new();
    for &v in votes {
        *t.entry(v).or_insert(0) += 1;
    }
    t
}

/// Most frequent value; ties go to the smallest. `None` for no votes.
pub fn majority_vote(votes: &[u8]) -> Option<u8> {
    let mut best: Option<(u8, usize)> = None;
    for (v, c) in tally(votes) {
        // Ascending iteration: only a strictly larger count displaces.
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v)
}

/// Direct prediction for each sample, order preserved.
pub fn sp_infer(model: &SlotScorer, samples: &[EmotionSample]) -> Result<Vec<Prediction>, InferenceError> {
    if model.task().is_crc() {
        return Err(ScorerError::WrongTask(model.task()).into());
    }
    samples
        .par_iter()
        .map(|s| {
            if model.task() != PromptTask::sp(s.track) {
                return Err(ScorerError::WrongTask(model.task()).into());
            }
            Ok(model
                .predict(&featurize(&s.text, model.feature_dim()))?
                .with_id(s.id.clone()))
        })
        .collect()
}

/// One CRC vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub anchor_id: String,
    pub position: TestPosition,
    pub value: u8,
    pub anchor_predicted: u8,
    pub anchor_gold: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrcOutcome {
    pub value: u8,
    pub tally: BTreeMap<u8, usize>,
    pub votes: Vec<Vote>,
}

impl CrcOutcome {
    /// Votes where the scorer recovered the anchor's own gold value.
    pub fn anchor_hits(&self) -> usize {
        self.votes
            .iter()
            .filter(|v| v.anchor_predicted == v.anchor_gold)
            .count()
    }
}

/// N anchored comparisons for one test sample and emotion. Anchors are drawn
/// with replacement and the test position is uniform over both slots; the
/// random stream depends only on (seed, test id, focus).
pub fn crc_infer_one(
    model: &SlotScorer,
    test: &EmotionSample,
    anchors: &[EmotionSample],
    focus: Emotion,
    config: &VoteConfig,
) -> Result<CrcOutcome, InferenceError> {
    config.validate()?;
    if model.task() != PromptTask::crc(test.track) {
        return Err(ScorerError::WrongTask(model.task()).into());
    }
    let usable: Vec<&EmotionSample> = anchors.iter().filter(|a| a.value(focus).is_some()).collect();
    if usable.is_empty() {
        return Err(InferenceError::NoAnchors(focus));
    }
    let mut r = rng(derive_seed(config.seed, &["crc", &test.id, focus.name()]));
    let dim = model.feature_dim();
    let mut votes = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let anchor = usable[r.random_range(0..usable.len())];
        let position = if r.random_bool(0.5) {
            TestPosition::First
        } else {
            TestPosition::Second
        };
        let (first, second) = match position {
            TestPosition::First => (&test.text, &anchor.text),
            TestPosition::Second => (&anchor.text, &test.text),
        };
        let slots = model.predict_slots(&crc_features(first, second, focus, dim));
        let (value, anchor_predicted) = match position {
            TestPosition::First => (slots[0], slots[1]),
            TestPosition::Second => (slots[1], slots[0]),
        };
        votes.push(Vote {
            anchor_id: anchor.id.clone(),
            position,
            value,
            anchor_predicted,
            anchor_gold: anchor.value(focus).expect("filtered above"),
        });
    }
    let values: Vec<u8> = votes.iter().map(|v| v.value).collect();
    Ok(CrcOutcome {
        value: majority_vote(&values).expect("n >= 1"),
        tally: tally(&values),
        votes,
    })
}

/// CRC prediction for one sample across the label set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrcPrediction {
    pub prediction: Prediction,
    pub outcomes: BTreeMap<Emotion, CrcOutcome>,
}

pub fn crc_infer(
    model: &SlotScorer,
    tests: &[EmotionSample],
    train: &[EmotionSample],
    label_set: &LabelSet,
    config: &VoteConfig,
) -> Result<Vec<CrcPrediction>, InferenceError> {
    config.validate()?;
    tests
        .par_iter()
        .map(|test| {
            let mut outcomes = BTreeMap::new();
            for &e in label_set.emotions() {
                outcomes.insert(e, crc_infer_one(model, test, train, e, config)?);
            }
            let values: LabelMap = outcomes.iter().map(|(&e, o)| (e, o.value)).collect();
            Ok(CrcPrediction {
                prediction: Prediction {
                    id: test.id.clone(),
                    raw: format_sp_target(&values),
                    values,
                    status: ParseStatus::Ok,
                },
                outcomes,
            })
        })
        .collect()
}

/// One line of a predictions JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub values: LabelMap,
    pub status: ParseStatus,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<BTreeMap<Emotion, Vec<u8>>>,
}

impl PredictionRecord {
    pub fn from_sp(prediction: &Prediction, method: &str) -> Self {
        Self {
            id: prediction.id.clone(),
            values: prediction.values.clone(),
            status: prediction.status,
            method: method.to_string(),
            votes: None,
        }
    }

    pub fn from_crc(prediction: &CrcPrediction) -> Self {
        let votes = prediction
            .outcomes
            .iter()
            .map(|(&e, o)| (e, o.votes.iter().map(|v| v.value).collect()))
            .collect();
        Self {
            votes: Some(votes),
            ..Self::from_sp(&prediction.prediction, "crc")
        }
    }

    pub fn to_prediction(&self) -> Prediction {
        Prediction {
            id: self.id.clone(),
            raw: if self.status == ParseStatus::Ok {
                format_sp_target(&self.values)
            } else {
                String::new()
            },
            values: self.values.clone(),
            status: self.status,
        }
    }
}
