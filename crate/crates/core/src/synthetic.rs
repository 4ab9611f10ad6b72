//! Linearly separable toy corpus over five emotions (no disgust).
//!
//! Every emotion contributes exactly one word per text: a neutral word when
//! absent, otherwise a cue word. Track B has one cue per intensity level;
//! Track A draws any of the emotion's three cues. Texts are padded with
//! filler and shuffled.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use crate::corpus::{Dataset, Emotion, EmotionSample, LabelMap, LabelSet, Track};
use crate::seed::{derive_seed, rng};

pub const TOY_EMOTIONS: [Emotion; 5] = [
    Emotion::Anger,
    Emotion::Fear,
    Emotion::Joy,
    Emotion::Sadness,
    Emotion::Surprise,
];

pub const TOY_LANGUAGE: &str = "eng";

fn cues(e: Emotion) -> [&'static str; 3] {
    match e {
        Emotion::Anger => ["irritated", "angry", "furious"],
        Emotion::Fear => ["uneasy", "afraid", "terrified"],
        Emotion::Joy => ["pleased", "happy", "ecstatic"],
        Emotion::Sadness => ["downcast", "sad", "devastated"],
        Emotion::Surprise => ["curious", "surprised", "astonished"],
        Emotion::Disgust => ["queasy", "disgusted", "revolted"],
    }
}

fn neutral(e: Emotion) -> &'static str {
    match e {
        Emotion::Anger => "calm",
        Emotion::Fear => "brave",
        Emotion::Joy => "indifferent",
        Emotion::Sadness => "content",
        Emotion::Surprise => "expected",
        Emotion::Disgust => "tolerant",
    }
}

const FILLER: [&str; 24] = [
    "the", "a", "we", "went", "to", "market", "after", "lunch", "and", "then", "walked", "home", "it", "was", "late",
    "my", "brother", "called", "about", "weekend", "train", "window", "coffee", "table",
];

pub fn label_set() -> LabelSet {
    LabelSet::new(TOY_LANGUAGE, TOY_EMOTIONS).expect("non-empty")
}

fn draw_values(track: Track, r: &mut crate::seed::Rng) -> LabelMap {
    TOY_EMOTIONS
        .iter()
        .map(|&e| {
            let v = match track {
                Track::A => r.random_bool(0.35) as u8,
                Track::B => {
                    if r.random_bool(0.5) {
                        0
                    } else {
                        r.random_range(1..=3)
                    }
                }
            };
            (e, v)
        })
        .collect()
}

fn compose(track: Track, values: &LabelMap, r: &mut crate::seed::Rng) -> String {
    let mut words: Vec<&str> = Vec::new();
    for (&e, &v) in values {
        let c = cues(e);
        words.push(match (track, v) {
            (_, 0) => neutral(e),
            (Track::A, _) => *c.choose(r).expect("three cues"),
            (Track::B, _) => c[v as usize - 1],
        });
    }
    let n_filler = r.random_range(2..=5);
    words.extend((0..n_filler).map(|_| *FILLER.choose(r).expect("filler")));
    words.shuffle(r);
    words.join(" ")
}

/// `n` samples with ids `{prefix}{index}`.
pub fn generate(track: Track, n: usize, seed: u64, prefix: &str) -> Dataset {
    let mut r = rng(derive_seed(seed, &["synthetic", prefix]));
    let samples = (0..n)
        .map(|i| {
            let values = draw_values(track, &mut r);
            EmotionSample {
                id: format!("{prefix}{i:05}"),
                language: TOY_LANGUAGE.to_string(),
                track,
                text: compose(track, &values, &mut r),
                values,
            }
        })
        .collect();
    Dataset {
        track,
        label_set: label_set(),
        samples,
    }
}

/// Disjoint train and test sets.
pub fn toy_split(track: Track, n_train: usize, n_test: usize, seed: u64) -> (Dataset, Dataset) {
    (
        generate(track, n_train, seed, "train-"),
        generate(track, n_test, seed, "test-"),
    )
}
