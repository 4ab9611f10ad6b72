//! Emotion datasets: the label vocabulary, track value ranges, and CSV/JSONL IO.
//!
//! Input files are CSV with a header `id,text,<emotion...>`. Emotion columns may
//! appear in any order; internally every map is keyed in canonical [`Emotion`]
//! order so outputs never depend on the source column layout.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The six emotion categories, declared in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Fear,
    Joy,
    Sadness,
    Surprise,
    Disgust,
}

impl Emotion {
    pub const ALL: [Emotion; 6] = [
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Disgust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Disgust => "disgust",
        }
    }

    /// Position in canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Case-insensitive lookup by name.
    pub fn from_name(name: &str) -> Option<Emotion> {
        Emotion::ALL.into_iter().find(|e| e.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::from_name(s.trim()).ok_or_else(|| format!("unknown emotion `{s}`"))
    }
}

/// Competition track. Track A is binary presence, Track B is intensity 0..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Track {
    A,
    B,
}

impl Track {
    pub fn max_value(self) -> u8 {
        match self {
            Track::A => 1,
            Track::B => 3,
        }
    }

    /// Number of distinct label values.
    pub fn arity(self) -> usize {
        self.max_value() as usize + 1
    }

    pub fn contains(self, value: u8) -> bool {
        value <= self.max_value()
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Track::A => f.write_str("A"),
            Track::B => f.write_str("B"),
        }
    }
}

impl FromStr for Track {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "a" | "A" => Ok(Track::A),
            "b" | "B" => Ok(Track::B),
            other => Err(format!("unknown track `{other}` (expected A or B)")),
        }
    }
}

/// Per-emotion gold or predicted values, always iterated in canonical order.
pub type LabelMap = BTreeMap<Emotion, u8>;

/// The emotions annotated for one language, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub language: String,
    emotions: Vec<Emotion>,
}

impl LabelSet {
    /// Builds a label set; duplicates are dropped and order is canonicalized.
    pub fn new(language: &str, emotions: impl IntoIterator<Item = Emotion>) -> Result<Self, CorpusError> {
        let mut emotions: Vec<Emotion> = emotions.into_iter().collect();
        emotions.sort();
        emotions.dedup();
        if emotions.is_empty() {
            return Err(CorpusError::EmptyLabelSet);
        }
        Ok(Self {
            language: normalize_language(language),
            emotions,
        })
    }

    pub fn emotions(&self) -> &[Emotion] {
        &self.emotions
    }

    pub fn len(&self) -> usize {
        self.emotions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emotions.is_empty()
    }

    pub fn contains(&self, emotion: Emotion) -> bool {
        self.emotions.binary_search(&emotion).is_ok()
    }
}

/// Language codes are free-form and compared case-insensitively.
pub fn normalize_language(code: &str) -> String {
    code.trim().to_lowercase()
}

/// One utterance with its per-emotion gold values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionSample {
    pub id: String,
    pub language: String,
    pub track: Track,
    pub text: String,
    pub values: LabelMap,
}

impl EmotionSample {
    pub fn value(&self, emotion: Emotion) -> Option<u8> {
        self.values.get(&emotion).copied()
    }
}

/// A loaded dataset: samples in file order plus the label set they cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub track: Track,
    pub label_set: LabelSet,
    pub samples: Vec<EmotionSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error at line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing column `{column}` in header (row {row})")]
    MissingColumn { row: usize, column: String },
    #[error("row {row}: {emotion} value {value} outside track {track} range")]
    ValueOutOfRange {
        row: usize,
        emotion: Emotion,
        value: i64,
        track: Track,
    },
    #[error("row {row}: {emotion} value `{raw}` is not an integer")]
    InvalidValue { row: usize, emotion: Emotion, raw: String },
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("label set is empty")]
    EmptyLabelSet,
}

/// Loads a CSV dataset. Row indices in errors are 1-based data rows (the header is row 0).
pub fn load_dataset(path: impl AsRef<Path>, track: Track, language: &str) -> Result<Dataset, CorpusError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(file, track, language)
}

pub fn read_dataset<R: Read>(reader: R, track: Track, language: &str) -> Result<Dataset, CorpusError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = csv.headers()?.clone();

    let find = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let id_col = find("id").ok_or_else(|| CorpusError::MissingColumn {
        row: 0,
        column: "id".into(),
    })?;
    let text_col = find("text").ok_or_else(|| CorpusError::MissingColumn {
        row: 0,
        column: "text".into(),
    })?;

    let mut emotion_cols: Vec<(Emotion, usize)> = Vec::new();
    for (col, name) in header.iter().enumerate() {
        if col == id_col || col == text_col {
            continue;
        }
        match Emotion::from_name(name.trim()) {
            Some(e) => emotion_cols.push((e, col)),
            None => log::warn!("ignoring unknown column `{name}`"),
        }
    }
    if emotion_cols.is_empty() {
        return Err(CorpusError::MissingColumn {
            row: 0,
            column: "<emotion>".into(),
        });
    }
    let label_set = LabelSet::new(language, emotion_cols.iter().map(|(e, _)| *e))?;
    if label_set.len() != emotion_cols.len() {
        return Err(CorpusError::Malformed {
            row: 0,
            message: "emotion column listed twice".into(),
        });
    }
    emotion_cols.sort();

    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let id = record.get(id_col).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(CorpusError::Malformed {
                row,
                message: "empty id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { row, id });
        }
        let text = record.get(text_col).unwrap_or_default().to_string();
        if text.trim().is_empty() {
            log::warn!("row {row}: sample `{id}` has empty text");
        }
        let mut values = LabelMap::new();
        for &(emotion, col) in &emotion_cols {
            let raw = record.get(col).unwrap_or_default().trim();
            let value: i64 = raw.parse().map_err(|_| CorpusError::InvalidValue {
                row,
                emotion,
                raw: raw.to_string(),
            })?;
            if value < 0 || value > track.max_value() as i64 {
                return Err(CorpusError::ValueOutOfRange {
                    row,
                    emotion,
                    value,
                    track,
                });
            }
            values.insert(emotion, value as u8);
        }
        samples.push(EmotionSample {
            id,
            language: label_set.language.clone(),
            track,
            text,
            values,
        });
    }

    Ok(Dataset {
        track,
        label_set,
        samples,
    })
}

/// Writes a dataset as CSV with header `id,text,<emotions in canonical order>`.
pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path.as_ref())?;
    write_dataset(file, dataset)
}

pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset) -> Result<(), CorpusError> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "text".to_string()];
    header.extend(dataset.label_set.emotions().iter().map(|e| e.name().to_string()));
    csv.write_record(&header)?;
    for s in &dataset.samples {
        let mut row = vec![s.id.clone(), s.text.clone()];
        for e in dataset.label_set.emotions() {
            row.push(s.value(*e).map(|v| v.to_string()).unwrap_or_default());
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// One JSON object per sample: `{id, language, track, text, values}`.
pub fn write_jsonl<W: Write>(mut writer: W, samples: &[EmotionSample]) -> Result<(), CorpusError> {
    for s in samples {
        serde_json::to_writer(&mut writer, s).map_err(|source| CorpusError::Json { line: 0, source })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: std::io::BufRead>(reader: R) -> Result<Vec<EmotionSample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
        out.push(sample);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    MissingValue(Emotion),
    UnexpectedEmotion(Emotion),
    ValueOutOfRange(Emotion),
}

/// Reports every invariant violation of `sample` against `label_set`; empty means valid.
pub fn validate_sample(sample: &EmotionSample, label_set: &LabelSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if sample.id.is_empty() {
        out.push(Violation::EmptyId);
    }
    for &e in label_set.emotions() {
        match sample.values.get(&e) {
            None => out.push(Violation::MissingValue(e)),
            Some(&v) if !sample.track.contains(v) => out.push(Violation::ValueOutOfRange(e)),
            Some(_) => {}
        }
    }
    for (&e, &v) in &sample.values {
        if !label_set.contains(e) {
            out.push(Violation::UnexpectedEmotion(e));
            if !sample.track.contains(v) {
                out.push(Violation::ValueOutOfRange(e));
            }
        }
    }
    out
}
