//! Hashed bag-of-words features.

use serde::{Deserialize, Serialize};

use crate::corpus::Emotion;
use crate::seed::fnv1a64;

pub const DEFAULT_FEATURE_DIM: usize = 1 << 16;

/// Index 0 of every feature space is the bias.
pub const BIAS_INDEX: u32 = 0;

/// Sparse feature vector: strictly increasing indices, no zero weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// Sorts entries and sums duplicates.
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|&(_, w)| w != 0.0);
        Self { entries: merged }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|&(i, _)| i)
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| weights[i as usize] * w).sum()
    }
}

/// Lowercased alphanumeric word tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn word_index(word: &str, salt: &str, dim: usize) -> u32 {
    let h = if salt.is_empty() {
        fnv1a64(word.as_bytes())
    } else {
        fnv1a64(format!("{salt}\u{1f}{word}").as_bytes())
    };
    // Words occupy 1..dim; 0 is the bias.
    (1 + h % (dim as u64 - 1)) as u32
}

fn word_entries<'a>(text: &'a str, dim: usize, salt: &'a str, offset: u32) -> impl Iterator<Item = (u32, f64)> + 'a {
    tokenize(text).map(move |w| (offset + word_index(&w, salt, dim), 1.0))
}

/// Unigram counts hashed into `dim` buckets plus a bias feature.
pub fn featurize(text: &str, dim: usize) -> FeatureVector {
    assert!(dim >= 2, "feature dimension must be at least 2");
    let mut entries = vec![(BIAS_INDEX, 1.0)];
    entries.extend(word_entries(text, dim, "", 0));
    FeatureVector::from_entries(entries)
}

/// Input width of the CRC scorer for word dimension `dim`.
pub fn crc_input_dim(dim: usize) -> usize {
    2 * dim + Emotion::ALL.len()
}

/// CRC input: conversation 1 words in `[1, dim)`, conversation 2 words in
/// `[dim + 1, 2 dim)`, then a one-hot focus block. Word hashes are salted by
/// the focus emotion so a linear scorer can weigh the same word differently
/// per emotion.
pub fn crc_features(text1: &str, text2: &str, focus: Emotion, dim: usize) -> FeatureVector {
    assert!(dim >= 2, "feature dimension must be at least 2");
    let salt = focus.name();
    let mut entries = vec![(BIAS_INDEX, 1.0), ((2 * dim + focus.index()) as u32, 1.0)];
    entries.extend(word_entries(text1, dim, salt, 0));
    entries.extend(word_entries(text2, dim, salt, dim as u32));
    FeatureVector::from_entries(entries)
}
