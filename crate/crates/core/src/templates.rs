//! Prompt templates for standard prediction (SP) and contrastive reasoning
//! calibration (CRC), plus tolerant-but-strict parsers for model outputs.
//!
//! Templates use `str.format`-style placeholders: `{name}` is substituted and
//! `{{` / `}}` render as literal braces.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Emotion, EmotionSample, LabelMap, LabelSet, Track};
use crate::pairgen::{summarize_values, ContrastivePair};

macro_rules! language_list {
    () => {
        "Afrikaans, Algerian Arabic, Amharic, Emakhuwa, Hausa, Igbo, Kinyarwanda, Moroccan Arabic, \
Mozambican Portuguese, Nigerian-Pidgin, Oromo, Setswana, Somali, Swahili, Sundanese, Tigrinya, \
Xitsonga, IsiXhosa, Yoruba, isiZulu Arabic, Chinese, Hindi, Indonesian, Javanese, Marathi English, \
German, Romanian, Russian, Latin American Spanish, Tatar, Ukrainian, Swedish, Mozambican Portuguese, \
and Brazilian Portuguese."
    };
}

pub const SP_TRACK_A: &str = concat!(
    "Task Description:\n",
    "You are tasked with determining the perceived emotion(s) of a speaker based on a conversation. \
Specifically, your goal is to predict the emotions that most people would associate with the speaker's \
last utterance. The possible emotions are: joy, sadness, fear, anger, surprise, and disgust. The \
conversation may be in any of the following languages: ",
    language_list!(),
    "\n\nInstructions:\n",
    "1. The language of the conversation will be explicitly indicated at the first place.\n",
    "2. Each turn in the conversation will be marked with \"Speaker1\" or \"Speaker2\" to indicate the speaker.\n",
    "3. You need to predict the emotions based on the last utterance from \"Speaker1\" (and any additional \
context or dialogue history if provided).\n",
    "4. For each emotion, indicate whether it applies using binary labels: 1 (emotion is present) or 0 \
(emotion is absent).\n",
    "\nExample Output Format:\n",
    "joy: {{ 1 or 0 }}, sadness: {{ 1 or 0 }}, fear: {{ 1 or 0 }}, anger: {{ 1 or 0 }}, (optional) \
surprise: {{ 1 or 0 }}, (optional) disgust: {{ 1 or 0 }}.\n",
    "\nLanguage:\n{lan}\n",
    "\nContent:\nSpeaker1: {text}"
);

pub const SP_TRACK_B: &str = concat!(
    "Task Description:\n",
    "You are tasked with predicting the intensity for each of the perceived emotion classes of a speaker \
based on a conversation. Specifically, your prediction should represent the emotional intensity most \
people associate with the speaker's last utterance. The possible emotion classes are: joy, sadness, \
fear, anger, surprise, and disgust. The conversation may be in any of the following languages: ",
    language_list!(),
    "\n\nInstructions:\n",
    "1. The language of the conversation will be explicitly indicated at the first place.\n",
    "2. Each turn in the conversation will be marked with \"Speaker1\" or \"Speaker2\" to indicate the speaker.\n",
    "3. You need to predict the emotion intensity based on the last utterance from \"Speaker1\" (and any \
additional context or dialogue history if provided).\n",
    "4. For each emotion class, the ordinal intensity levels include: 0 for no emotion, 1 for a low degree \
of emotion, 2 for a moderate degree of emotion, and 3 for a high degree of emotion.\n",
    "\nExample Output Format:\n",
    "joy: {{ 0, 1, 2, or 3 }}, sadness: {{ 0, 1, 2, or 3 }}, fear: {{ 0, 1, 2, or 3 }}, anger: {{ 0, 1, \
2, or 3 }}, (optional) surprise: {{ 0, 1, 2, or 3 }}, (optional) disgust: {{ 0, 1, 2, or 3 }}.\n",
    "\nLanguage:\n{lan}\n",
    "\nContent:\nSpeaker1: {text}"
);

pub const CRC_TRACK_A: &str = concat!(
    "Task Description:\n",
    "Your task is to compare and predict the perceived emotional label exhibited by the speaker in two \
separate conversations. The target emotion for comparison is \"{label}\". The conversation may be in \
any of the following languages: ",
    language_list!(),
    "\n\nInstructions:\n",
    "1. The two conversations will be marked as \"Conversation1\" and \"Conversation2\". Each turn in the \
conversation will be marked as \"Speaker1\" or \"Speaker2\" to indicate the speaker.\n",
    "2. The language of the conversation will be explicitly stated at the beginning of each conversation.\n",
    "3. You only need to predict the emotions of \"Speaker1\" in both conversations. No predictions are \
required for \"Speaker2\".\n",
    "4. Your comparison and prediction should be based on the last utterance of \"Speaker1\" in each \
conversation, while also considering any additional background or dialogue history if provided.\n",
    "5. First, provide a brief summary of the comparison result between the two conversations. Then, use \
binary labels to indicate whether the specified emotion (\"{label}\") is present in each conversation: \
1 (emotion is present) or 0 (emotion is absent).\n",
    "\nExample Output Format:\n",
    "For emotion label \"{label}\", {{Brief summary of the comparison result}}. Conversation1: {{1 or 0}}, \
Conversation2: {{1 or 0}}.\n",
    "\nConversation1:\nLanguage: {lan1}\nSpeaker1: {text1}\n",
    "\nConversation2:\nLanguage: {lan2}\nSpeaker1: {text2}"
);

pub const CRC_TRACK_B: &str = concat!(
    "Task Description:\n",
    "Your task is to compare and predict the intensity of the specific perceived emotion class in two \
separate conversations. The target preceived emotion class for comparison is \"{label}\". The \
conversation may be in any of the following languages: ",
    language_list!(),
    "\n\nInstructions:\n",
    "1. The two conversations will be marked as \"Conversation1\" and \"Conversation2\". Each turn in the \
conversation will be marked as \"Speaker1\" or \"Speaker2\" to indicate the speaker.\n",
    "2. The language of the conversation will be explicitly stated at the beginning of each conversation.\n",
    "3. You only need to predict the emotional intensity of \"Speaker1\" in both conversations. No \
predictions are required for \"Speaker2\".\n",
    "4. Your comparison and prediction should be based on the last utterance of \"Speaker1\" in each \
conversation, while also considering any additional background or dialogue history if provided.\n",
    "5. First, provide a brief summary of the comparison result between the two conversations. Then, use \
one of the four levels to indicate the target ordinal intensity:  0 for no emotion, 1 for a low degree \
of emotion, 2 for a moderate degree of emotion, and 3 for a high degree of emotion.\n",
    "\nExample Output Format:\n",
    "For emotion label \"{label}\", {{Brief summary of the comparison result}}.  Conversation1: {{ 0, 1, \
2, or 3 }}, Conversation2: {{ 0, 1, 2, or 3 }}.\n",
    "\nConversation1:\nLanguage: {lan1}\nSpeaker1: {text1}\n",
    "\nConversation2:\nLanguage: {lan2}\nSpeaker1: {text2}"
);

/// Emotion order used in SP output strings.
pub const OUTPUT_ORDER: [Emotion; 6] = [
    Emotion::Joy,
    Emotion::Sadness,
    Emotion::Fear,
    Emotion::Anger,
    Emotion::Surprise,
    Emotion::Disgust,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptTask {
    #[serde(rename = "SP_A")]
    SpA,
    #[serde(rename = "SP_B")]
    SpB,
    #[serde(rename = "CRC_A")]
    CrcA,
    #[serde(rename = "CRC_B")]
    CrcB,
}

impl PromptTask {
    pub fn sp(track: Track) -> Self {
        match track {
            Track::A => PromptTask::SpA,
            Track::B => PromptTask::SpB,
        }
    }

    pub fn crc(track: Track) -> Self {
        match track {
            Track::A => PromptTask::CrcA,
            Track::B => PromptTask::CrcB,
        }
    }

    pub fn track(self) -> Track {
        match self {
            PromptTask::SpA | PromptTask::CrcA => Track::A,
            PromptTask::SpB | PromptTask::CrcB => Track::B,
        }
    }

    pub fn is_crc(self) -> bool {
        matches!(self, PromptTask::CrcA | PromptTask::CrcB)
    }

    pub fn template(self) -> &'static str {
        match self {
            PromptTask::SpA => SP_TRACK_A,
            PromptTask::SpB => SP_TRACK_B,
            PromptTask::CrcA => CRC_TRACK_A,
            PromptTask::CrcB => CRC_TRACK_B,
        }
    }
}

impl fmt::Display for PromptTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptTask::SpA => "SP_A",
            PromptTask::SpB => "SP_B",
            PromptTask::CrcA => "CRC_A",
            PromptTask::CrcB => "CRC_B",
        })
    }
}

/// Where the test sample sits in a CRC prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum TestPosition {
    First,
    Second,
}

impl From<TestPosition> for u8 {
    fn from(p: TestPosition) -> u8 {
        match p {
            TestPosition::First => 1,
            TestPosition::Second => 2,
        }
    }
}

impl TryFrom<u8> for TestPosition {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(TestPosition::First),
            2 => Ok(TestPosition::Second),
            other => Err(format!("test position must be 1 or 2, got {other}")),
        }
    }
}

/// Bookkeeping carried alongside a rendered prompt. `texts` and `languages`
/// follow the rendered conversation order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptMeta {
    pub ids: Vec<String>,
    pub languages: Vec<String>,
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<Emotion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_position: Option<TestPosition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub task: PromptTask,
    pub input: String,
    pub target: String,
    pub meta: PromptMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Malformed,
}

/// A parsed (or directly predicted) SP output. Malformed predictions carry no values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub values: LabelMap,
    pub status: ParseStatus,
    pub raw: String,
}

impl Prediction {
    pub fn is_ok(&self) -> bool {
        self.status == ParseStatus::Ok
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn malformed(raw: &str) -> Self {
        Prediction {
            id: String::new(),
            values: LabelMap::new(),
            status: ParseStatus::Malformed,
            raw: raw.to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("focus emotion {0} missing from a paired sample")]
    FocusEmotionMissing(Emotion),
}

/// Substitutes `{name}` placeholders; `{{` and `}}` become literal braces.
/// Unknown placeholders are left untouched.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
        } else if tail.starts_with('{') {
            match tail.find('}') {
                Some(end) => {
                    let name = &tail[1..end];
                    match vars.iter().find(|(k, _)| *k == name) {
                        Some((_, v)) => out.push_str(v),
                        None => out.push_str(&tail[..=end]),
                    }
                    rest = &tail[end + 1..];
                }
                None => {
                    out.push_str(tail);
                    rest = "";
                }
            }
        } else {
            out.push('}');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// `joy: 1, sadness: 0, ... .` over the emotions present in `values`, in output order.
pub fn format_sp_target(values: &LabelMap) -> String {
    let parts: Vec<String> = OUTPUT_ORDER
        .iter()
        .filter_map(|e| values.get(e).map(|v| format!("{}: {}", e.name(), v)))
        .collect();
    format!("{}.", parts.join(", "))
}

pub fn render_sp_input(track: Track, language: &str, text: &str) -> String {
    fill(PromptTask::sp(track).template(), &[("lan", language), ("text", text)])
}

pub fn render_sp(sample: &EmotionSample) -> PromptInstance {
    PromptInstance {
        task: PromptTask::sp(sample.track),
        input: render_sp_input(sample.track, &sample.language, &sample.text),
        target: format_sp_target(&sample.values),
        meta: PromptMeta {
            ids: vec![sample.id.clone()],
            languages: vec![sample.language.clone()],
            texts: vec![sample.text.clone()],
            focus: None,
            test_position: None,
        },
    }
}

pub fn format_crc_target(focus: Emotion, summary: &str, v1: u8, v2: u8) -> String {
    format!(
        "For emotion label \"{}\", {}. Conversation1: {}, Conversation2: {}.",
        focus.name(),
        summary,
        v1,
        v2
    )
}

/// Renders a CRC prompt. The pair's `s2` is the test sample: at
/// [`TestPosition::Second`] the pair keeps its order, at
/// [`TestPosition::First`] the two samples are swapped.
pub fn render_crc(pair: &ContrastivePair, test_position: TestPosition) -> Result<PromptInstance, TemplateError> {
    let focus = pair.focus;
    let (first, second) = match test_position {
        TestPosition::Second => (&pair.s1, &pair.s2),
        TestPosition::First => (&pair.s2, &pair.s1),
    };
    let v1 = first.value(focus).ok_or(TemplateError::FocusEmotionMissing(focus))?;
    let v2 = second.value(focus).ok_or(TemplateError::FocusEmotionMissing(focus))?;
    let track = first.track;
    let task = PromptTask::crc(track);
    let summary = if test_position == TestPosition::Second {
        pair.summary.clone()
    } else {
        summarize_values(track, focus, v1, v2)
    };
    let input = fill(
        task.template(),
        &[
            ("label", focus.name()),
            ("lan1", &first.language),
            ("text1", &first.text),
            ("lan2", &second.language),
            ("text2", &second.text),
        ],
    );
    Ok(PromptInstance {
        task,
        input,
        target: format_crc_target(focus, &summary, v1, v2),
        meta: PromptMeta {
            ids: vec![first.id.clone(), second.id.clone()],
            languages: vec![first.language.clone(), second.language.clone()],
            texts: vec![first.text.clone(), second.text.clone()],
            focus: Some(focus),
            test_position: Some(test_position),
        },
    })
}

fn parse_value(raw: &str, track: Track) -> Option<u8> {
    let raw = raw.trim();
    if raw.is_empty() || raw.len() > 3 || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: u16 = raw.parse().ok()?;
    (v <= track.max_value() as u16).then_some(v as u8)
}

/// Parses an SP output. Whitespace and emotion-name case are free, the
/// trailing period is optional, and pair order is not enforced. Any missing,
/// duplicated, unknown, or out-of-range label makes the output malformed.
pub fn parse_sp_output(text: &str, label_set: &LabelSet, track: Track) -> Prediction {
    let mut body = text.trim();
    if let Some(stripped) = body.strip_suffix('.') {
        body = stripped.trim_end();
    }
    if body.is_empty() {
        return Prediction::malformed(text);
    }
    let mut values = LabelMap::new();
    for segment in body.split(',') {
        let Some((name, value)) = segment.split_once(':') else {
            return Prediction::malformed(text);
        };
        let Some(emotion) = Emotion::from_name(name.trim()) else {
            return Prediction::malformed(text);
        };
        if !label_set.contains(emotion) {
            return Prediction::malformed(text);
        }
        let Some(v) = parse_value(value, track) else {
            return Prediction::malformed(text);
        };
        if values.insert(emotion, v).is_some() {
            return Prediction::malformed(text);
        }
    }
    if values.len() != label_set.len() {
        return Prediction::malformed(text);
    }
    Prediction {
        id: String::new(),
        values,
        status: ParseStatus::Ok,
        raw: text.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrcOutput {
    pub label: String,
    pub summary: String,
    pub v1: u8,
    pub v2: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed CRC output: {0}")]
pub struct MalformedOutput(pub &'static str);

const CONV1: &str = "conversation1:";
const CONV2: &str = "conversation2:";
const PREFIX: &str = "for emotion label \"";

/// Extracts `(label, summary, v1, v2)` from a CRC output string.
pub fn parse_crc_output(text: &str, track: Track) -> Result<CrcOutput, MalformedOutput> {
    // ASCII lowercasing keeps byte offsets aligned with `text`.
    let lower = text.to_ascii_lowercase();
    let i2 = lower
        .rfind(CONV2)
        .ok_or(MalformedOutput("missing Conversation2 marker"))?;
    let i1 = lower[..i2]
        .rfind(CONV1)
        .ok_or(MalformedOutput("missing Conversation1 marker"))?;

    let seg1 = text[i1 + CONV1.len()..i2].trim();
    let seg1 = seg1
        .strip_suffix(',')
        .ok_or(MalformedOutput("expected `,` after Conversation1 value"))?;
    let v1 = parse_value(seg1, track).ok_or(MalformedOutput("bad Conversation1 value"))?;

    let mut seg2 = text[i2 + CONV2.len()..].trim();
    if let Some(s) = seg2.strip_suffix('.') {
        seg2 = s;
    }
    let v2 = parse_value(seg2, track).ok_or(MalformedOutput("bad Conversation2 value"))?;

    let head = text[..i1].trim();
    if !head.to_ascii_lowercase().starts_with(PREFIX) {
        return Err(MalformedOutput("missing `For emotion label` prefix"));
    }
    let after = &head[PREFIX.len()..];
    let close = after.find('"').ok_or(MalformedOutput("unterminated label"))?;
    let label = after[..close].trim().to_string();
    let rest = after[close + 1..].trim_start();
    let rest = rest
        .strip_prefix(',')
        .ok_or(MalformedOutput("expected `,` after label"))?
        .trim();
    let summary = rest.strip_suffix('.').unwrap_or(rest).trim().to_string();

    Ok(CrcOutput { label, summary, v1, v2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairgen::ContrastivePair;

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

    fn sample(id: &str, track: Track, vals: [u8; 5], text: &str) -> EmotionSample {
        EmotionSample {
            id: id.into(),
            language: "eng".into(),
            track,
            text: text.into(),
            values: eng5().emotions().iter().copied().zip(vals).collect(),
        }
    }

    #[test]
    fn sp_target_follows_output_order() {
        // anger, fear, joy, sadness, surprise
        let s = sample("x1", Track::A, [0, 0, 1, 0, 0], "I won!");
        let inst = render_sp(&s);
        assert_eq!(inst.target, "joy: 1, sadness: 0, fear: 0, anger: 0, surprise: 0.");
        assert_eq!(inst.task, PromptTask::SpA);
        let b = sample("x2", Track::B, [0; 5], "meh");
        assert_eq!(
            render_sp(&b).target,
            "joy: 0, sadness: 0, fear: 0, anger: 0, surprise: 0."
        );
    }

    #[test]
    fn sp_input_fills_placeholders() {
        let s = sample("x1", Track::A, [0, 0, 1, 0, 0], "I {won}!");
        let input = render_sp(&s).input;
        assert!(input.ends_with("Language:\neng\n\nContent:\nSpeaker1: I {won}!"));
        assert!(input.contains("joy: { 1 or 0 }, sadness: { 1 or 0 }"));
        assert!(!input.contains("{lan}"));
        assert_eq!(input.matches("Language:").count(), 1);
        assert_eq!(input.matches("Content:").count(), 1);
        assert!(input.contains("isiZulu Arabic, Chinese"));
    }

    #[test]
    fn fill_handles_escapes() {
        assert_eq!(fill("{{a}} {b} }}", &[("b", "x")]), "{a} x }");
        assert_eq!(fill("{missing}", &[]), "{missing}");
        assert_eq!(fill("tail {", &[]), "tail {");
    }

    #[test]
    fn sp_parse_examples() {
        let ls = eng5();
        let p = parse_sp_output("joy: 1, sadness: 0, fear: 0, anger: 0, surprise: 0.", &ls, Track::A);
        assert!(p.is_ok());
        assert_eq!(p.values[&Emotion::Joy], 1);

        let p = parse_sp_output("joy: yes, sadness: 0, fear: 0, anger: 0, surprise: 0.", &ls, Track::A);
        assert_eq!(p.status, ParseStatus::Malformed);
        assert!(p.values.is_empty());

        let p = parse_sp_output("joy: 3, sadness: 0, fear: 0, anger: 0, surprise: 0.", &ls, Track::A);
        assert_eq!(p.status, ParseStatus::Malformed);
        assert!(parse_sp_output("joy: 3, sadness: 0, fear: 0, anger: 0, surprise: 0.", &ls, Track::B).is_ok());
    }

    #[test]
    fn sp_parse_is_tolerant_to_layout() {
        let ls = eng5();
        let p = parse_sp_output("  JOY:1,\nsadness :  0 ,fear: 0,Anger: 0, surprise: 1 ", &ls, Track::A);
        assert!(p.is_ok());
        assert_eq!(p.values[&Emotion::Surprise], 1);
    }

    #[test]
    fn sp_parse_rejects_structure_errors() {
        let ls = eng5();
        for bad in [
            "",
            ".",
            "joy: 1, sadness: 0, fear: 0, anger: 0.",
            "joy: 1, joy: 1, sadness: 0, fear: 0, anger: 0, surprise: 0.",
            "joy: 1, sadness: 0, fear: 0, anger: 0, surprise: 0, disgust: 0.",
            "joy: 1, sadness: 0, fear: 0, anger: 0, surprise: 0,",
            "joy 1, sadness: 0, fear: 0, anger: 0, surprise: 0.",
            "joy: -1, sadness: 0, fear: 0, anger: 0, surprise: 0.",
            "joy: 1..",
        ] {
            assert_eq!(
                parse_sp_output(bad, &ls, Track::A).status,
                ParseStatus::Malformed,
                "{bad:?}"
            );
        }
    }

    fn pair(track: Track, a: u8, b: u8) -> ContrastivePair {
        let mut s1 = sample("a", track, [a, 0, 0, 0, 0], "first text");
        let mut s2 = sample("b", track, [b, 0, 0, 0, 0], "second text");
        s1.language = "eng".into();
        s2.language = "ptbr".into();
        ContrastivePair::new(Emotion::Anger, s1, s2).unwrap()
    }

    #[test]
    fn crc_render_positions() {
        let p = pair(Track::A, 1, 0);
        let second = render_crc(&p, TestPosition::Second).unwrap();
        assert!(second.target.ends_with("Conversation1: 1, Conversation2: 0."));
        assert!(second.target.starts_with("For emotion label \"anger\", "));
        assert!(second
            .input
            .ends_with("Conversation2:\nLanguage: ptbr\nSpeaker1: second text"));
        assert_eq!(second.meta.ids, vec!["a", "b"]);

        let first = render_crc(&p, TestPosition::First).unwrap();
        assert!(first.target.ends_with("Conversation1: 0, Conversation2: 1."));
        assert!(first
            .input
            .ends_with("Conversation2:\nLanguage: eng\nSpeaker1: first text"));
        assert_eq!(first.meta.ids, vec!["b", "a"]);
        assert!(first.input.contains("The target emotion for comparison is \"anger\"."));
    }

    #[test]
    fn crc_self_pair_is_symmetric() {
        let s = sample("a", Track::B, [2, 0, 0, 0, 0], "t");
        let p = ContrastivePair {
            focus: Emotion::Anger,
            v1: 2,
            v2: 2,
            summary: summarize_values(Track::B, Emotion::Anger, 2, 2),
            s1: s.clone(),
            s2: s,
        };
        let out = parse_crc_output(&render_crc(&p, TestPosition::First).unwrap().target, Track::B).unwrap();
        assert_eq!(out.v1, out.v2);
    }

    #[test]
    fn crc_missing_focus_is_error() {
        let mut p = pair(Track::A, 1, 0);
        p.s2.values.remove(&Emotion::Anger);
        assert_eq!(
            render_crc(&p, TestPosition::Second),
            Err(TemplateError::FocusEmotionMissing(Emotion::Anger))
        );
    }

    #[test]
    fn crc_parse_examples() {
        let out = parse_crc_output(
            "For emotion label \"anger\", conversation one shows anger while two does not. Conversation1: 1, Conversation2: 0.",
            Track::A,
        )
        .unwrap();
        assert_eq!((out.v1, out.v2), (1, 0));
        assert_eq!(out.label, "anger");
        assert_eq!(out.summary, "conversation one shows anger while two does not");

        assert!(parse_crc_output("For emotion label \"anger\", x. Conversation1: 1.", Track::A).is_err());
        let b = parse_crc_output(
            "For emotion label \"fear\", y. Conversation1: 3, Conversation2: 2.",
            Track::B,
        )
        .unwrap();
        assert_eq!((b.v1, b.v2), (3, 2));
        assert!(parse_crc_output(
            "For emotion label \"fear\", y. Conversation1: 3, Conversation2: 2.",
            Track::A
        )
        .is_err());
        assert!(parse_crc_output("Conversation1: 1, Conversation2: 0.", Track::A).is_err());
    }

    #[test]
    fn crc_round_trip_both_positions() {
        for track in [Track::A, Track::B] {
            for a in 0..=track.max_value() {
                for b in 0..=track.max_value() {
                    let p = pair(track, a, b);
                    for pos in [TestPosition::First, TestPosition::Second] {
                        let inst = render_crc(&p, pos).unwrap();
                        let out = parse_crc_output(&inst.target, track).unwrap();
                        let expect = if pos == TestPosition::Second { (a, b) } else { (b, a) };
                        assert_eq!((out.v1, out.v2), expect);
                        assert_eq!(out.label, "anger");
                    }
                }
            }
        }
    }

    #[test]
    fn prompt_instance_json_shape() {
        let inst = render_sp(&sample("x1", Track::B, [0, 1, 2, 3, 0], "hi"));
        let v = serde_json::to_value(&inst).unwrap();
        assert_eq!(v["task"], "SP_B");
        for k in ["task", "input", "target", "meta"] {
            assert!(v.get(k).is_some());
        }
        let crc = render_crc(&pair(Track::A, 1, 0), TestPosition::First).unwrap();
        let v = serde_json::to_value(&crc).unwrap();
        assert_eq!(v["meta"]["test_position"], 1);
        assert_eq!(v["meta"]["focus"], "anger");
        let back: PromptInstance = serde_json::from_value(v).unwrap();
        assert_eq!(back, crc);
    }
}
