//! F1 and Pearson reports with pooled and per-emotion aggregation, plus
//! error diagnostics.
//!
//! `paper_macro` pools every (sample, emotion) decision into one score;
//! `paper_micro` averages the per-emotion scores. This is the reverse of the
//! usual macro/micro naming, hence the prefix.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Emotion, EmotionSample, Track};
use crate::templates::Prediction;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("predictions and gold samples are not aligned: {0}")]
    IdMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub paper_macro: f64,
    pub paper_micro: f64,
    pub per_emotion: BTreeMap<Emotion, f64>,
    pub n_samples: usize,
    pub n_malformed: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Gold and predicted value per (sample, emotion); malformed or missing
/// predictions count as 0.
struct Aligned {
    emotions: Vec<Emotion>,
    gold: BTreeMap<Emotion, Vec<f64>>,
    pred: BTreeMap<Emotion, Vec<f64>>,
    n_samples: usize,
    n_malformed: usize,
}

fn align(preds: &[Prediction], golds: &[EmotionSample]) -> Result<Aligned, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::IdMismatch(format!(
            "{} predictions for {} gold samples",
            preds.len(),
            golds.len()
        )));
    }
    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(MetricError::IdMismatch(format!("duplicate prediction id `{}`", p.id)));
        }
    }
    let emotions: Vec<Emotion> = golds
        .iter()
        .flat_map(|g| g.values.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut gold: BTreeMap<Emotion, Vec<f64>> = emotions.iter().map(|&e| (e, Vec::new())).collect();
    let mut pred = gold.clone();
    let mut n_malformed = 0;
    for g in golds {
        let p = by_id
            .get(g.id.as_str())
            .ok_or_else(|| MetricError::IdMismatch(format!("no prediction for `{}`", g.id)))?;
        if !p.is_ok() {
            n_malformed += 1;
        }
        for &e in &emotions {
            let gv = g
                .value(e)
                .ok_or_else(|| MetricError::IdMismatch(format!("gold `{}` has no value for {e}", g.id)))?;
            let pv = if p.is_ok() {
                p.values.get(&e).copied().unwrap_or(0)
            } else {
                0
            };
            gold.get_mut(&e).expect("seeded").push(gv as f64);
            pred.get_mut(&e).expect("seeded").push(pv as f64);
        }
    }
    Ok(Aligned {
        emotions,
        gold,
        pred,
        n_samples: golds.len(),
        n_malformed,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Binary F1 with positives `> 0`. `None` when there are no positives in
/// either series.
pub fn binary_f1(gold: &[f64], pred: &[f64]) -> Option<f64> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&g, &p) in gold.iter().zip(pred) {
        match (g > 0.0, p > 0.0) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
}

/// Pearson correlation. `None` when either series has zero variance or the
/// series are shorter than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "series lengths differ");
    if x.len() < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn build_report(
    metric: &str,
    aligned: Aligned,
    score: fn(&[f64], &[f64]) -> Option<f64>,
    degenerate: &str,
) -> MetricReport {
    let mut warnings = Vec::new();
    let mut score_or_zero = |scope: &str, g: &[f64], p: &[f64]| match score(g, p) {
        Some(s) => s,
        None => {
            warnings.push(format!("{scope}: {degenerate}; scored as 0"));
            0.0
        }
    };
    let mut per_emotion = BTreeMap::new();
    let mut pooled_gold = Vec::new();
    let mut pooled_pred = Vec::new();
    for &e in &aligned.emotions {
        let g = &aligned.gold[&e];
        let p = &aligned.pred[&e];
        per_emotion.insert(e, score_or_zero(e.name(), g, p));
        pooled_gold.extend_from_slice(g);
        pooled_pred.extend_from_slice(p);
    }
    let paper_macro = score_or_zero("pooled", &pooled_gold, &pooled_pred);
    let scores: Vec<f64> = per_emotion.values().copied().collect();
    if aligned.n_malformed > 0 {
        warnings.push(format!(
            "{} malformed predictions scored as all zeros",
            aligned.n_malformed
        ));
    }
    MetricReport {
        metric: metric.to_string(),
        paper_macro,
        paper_micro: mean(&scores),
        per_emotion,
        n_samples: aligned.n_samples,
        n_malformed: aligned.n_malformed,
        warnings,
    }
}

pub fn f1_report(preds: &[Prediction], golds: &[EmotionSample]) -> Result<MetricReport, MetricError> {
    Ok(build_report(
        "f1",
        align(preds, golds)?,
        binary_f1,
        "no positive gold or predicted labels",
    ))
}

pub fn pearson_report(preds: &[Prediction], golds: &[EmotionSample]) -> Result<MetricReport, MetricError> {
    Ok(build_report("pearson", align(preds, golds)?, pearson, "zero variance"))
}

/// F1 for Track A, Pearson for Track B.
pub fn track_report(track: Track, preds: &[Prediction], golds: &[EmotionSample]) -> Result<MetricReport, MetricError> {
    match track {
        Track::A => f1_report(preds, golds),
        Track::B => pearson_report(preds, golds),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureRate {
    pub malformed: usize,
    pub total: usize,
    pub rate: f64,
}

pub fn parse_failure_rate(outputs: &[Prediction]) -> FailureRate {
    let malformed = outputs.iter().filter(|p| !p.is_ok()).count();
    let total = outputs.len();
    FailureRate {
        malformed,
        total,
        rate: if total == 0 {
            0.0
        } else {
            malformed as f64 / total as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EmotionErrors {
    pub errors: usize,
    pub off_by_one: usize,
    /// Predicted above gold (Track A: false positive).
    pub over: usize,
    /// Predicted below gold (Track A: false negative).
    pub under: usize,
    /// Predicted 0 where gold is present.
    pub false_neutral: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub track: Track,
    pub total_decisions: usize,
    /// Only emotions with at least one error.
    pub per_emotion: BTreeMap<Emotion, EmotionErrors>,
    /// `confusion[e][gold][pred]`.
    pub confusion: BTreeMap<Emotion, Vec<Vec<usize>>>,
    /// Share of wrong predictions off by exactly one level (Track B only).
    pub off_by_one_share: Option<f64>,
    /// Share of wrong predictions that predicted 0 against a present gold label.
    pub false_neutral_share: Option<f64>,
}

impl ErrorBreakdown {
    pub fn total_errors(&self) -> usize {
        self.per_emotion.values().map(|e| e.errors).sum()
    }
}

pub fn error_breakdown(
    preds: &[Prediction],
    golds: &[EmotionSample],
    track: Track,
) -> Result<ErrorBreakdown, MetricError> {
    let aligned = align(preds, golds)?;
    let arity = track.arity();
    let mut per_emotion = BTreeMap::new();
    let mut confusion = BTreeMap::new();
    let mut total_decisions = 0;
    for &e in &aligned.emotions {
        let mut errs = EmotionErrors::default();
        let mut matrix = vec![vec![0usize; arity]; arity];
        for (&g, &p) in aligned.gold[&e].iter().zip(&aligned.pred[&e]) {
            let (g, p) = (g as usize, p as usize);
            total_decisions += 1;
            if g < arity && p < arity {
                matrix[g][p] += 1;
            }
            if g == p {
                continue;
            }
            errs.errors += 1;
            if g.abs_diff(p) == 1 {
                errs.off_by_one += 1;
            }
            if p > g {
                errs.over += 1;
            } else {
                errs.under += 1;
            }
            if p == 0 {
                errs.false_neutral += 1;
            }
        }
        if errs.errors > 0 {
            per_emotion.insert(e, errs);
        }
        confusion.insert(e, matrix);
    }
    let total: usize = per_emotion.values().map(|e: &EmotionErrors| e.errors).sum();
    let share = |f: fn(&EmotionErrors) -> usize| {
        (total > 0).then(|| per_emotion.values().map(f).sum::<usize>() as f64 / total as f64)
    };
    Ok(ErrorBreakdown {
        track,
        total_decisions,
        off_by_one_share: if track == Track::B {
            share(|e| e.off_by_one)
        } else {
            None
        },
        false_neutral_share: share(|e| e.false_neutral),
        per_emotion,
        confusion,
    })
}

fn fmt_share(s: Option<f64>) -> String {
    s.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into())
}

/// Aligned text table: one row per named report, columns Macro, Micro, then
/// each emotion present in any report.
pub fn format_table(rows: &[(&str, &MetricReport)]) -> String {
    let emotions: Vec<Emotion> = rows
        .iter()
        .flat_map(|(_, r)| r.per_emotion.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut header = vec!["Method".to_string(), "Macro".into(), "Micro".into()];
    header.extend(emotions.iter().map(|e| {
        let n = e.name();
        n[..1].to_uppercase() + &n[1..]
    }));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            let mut cells = vec![
                name.to_string(),
                format!("{:.3}", r.paper_macro),
                format!("{:.3}", r.paper_micro),
            ];
            cells.extend(emotions.iter().map(|e| {
                r.per_emotion
                    .get(e)
                    .map(|v| format!("{v:.3}"))
                    .unwrap_or_else(|| "-".into())
            }));
            cells
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&body)
                .map(|row| row[c].len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |row: &[String]| {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    };
    line(&header);
    line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>());
    for row in &body {
        line(row);
    }
    out
}

/// Plain-text summary of an error breakdown.
pub fn format_breakdown(b: &ErrorBreakdown) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "errors: {} of {} decisions; off-by-one share: {}; false-neutral share: {}",
        b.total_errors(),
        b.total_decisions,
        fmt_share(b.off_by_one_share),
        fmt_share(b.false_neutral_share)
    );
    for (e, errs) in &b.per_emotion {
        let _ = writeln!(
            out,
            "  {:<8} errors {:>4}  over {:>4}  under {:>4}  off-by-one {:>4}  false-neutral {:>4}",
            e.name(),
            errs.errors,
            errs.over,
            errs.under,
            errs.off_by_one,
            errs.false_neutral
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelMap;
    use crate::templates::ParseStatus;

    fn gold(id: &str, track: Track, vals: &[(Emotion, u8)]) -> EmotionSample {
        EmotionSample {
            id: id.into(),
            language: "eng".into(),
            track,
            text: String::new(),
            values: vals.iter().copied().collect(),
        }
    }

    fn pred(id: &str, vals: &[(Emotion, u8)]) -> Prediction {
        let values: LabelMap = vals.iter().copied().collect();
        Prediction {
            id: id.into(),
            raw: crate::templates::format_sp_target(&values),
            values,
            status: ParseStatus::Ok,
        }
    }

    fn malformed(id: &str) -> Prediction {
        Prediction {
            id: id.into(),
            values: LabelMap::new(),
            status: ParseStatus::Malformed,
            raw: "garbage".into(),
        }
    }

    #[test]
    fn joy_hand_instance() {
        use Emotion::Joy;
        let g: Vec<_> = [1, 1, 0, 0]
            .iter()
            .enumerate()
            .map(|(i, &v)| gold(&i.to_string(), Track::A, &[(Joy, v)]))
            .collect();
        let p: Vec<_> = [1, 0, 0, 1]
            .iter()
            .enumerate()
            .map(|(i, &v)| pred(&i.to_string(), &[(Joy, v)]))
            .collect();
        let r = f1_report(&p, &g).unwrap();
        assert_eq!(r.per_emotion[&Joy], 0.5);
        assert_eq!(r.paper_macro, 0.5);
    }

    #[test]
    fn perfect_predictions() {
        let vals: [&[(Emotion, u8)]; 2] = [
            &[(Emotion::Joy, 1), (Emotion::Fear, 0)],
            &[(Emotion::Joy, 0), (Emotion::Fear, 1)],
        ];
        let g: Vec<_> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| gold(&i.to_string(), Track::A, v))
            .collect();
        let p: Vec<_> = vals.iter().enumerate().map(|(i, v)| pred(&i.to_string(), v)).collect();
        let r = f1_report(&p, &g).unwrap();
        assert_eq!(r.paper_macro, 1.0);
        assert_eq!(r.paper_micro, 1.0);
        assert!(r.per_emotion.values().all(|&v| v == 1.0));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn pearson_hand_series() {
        let x = [0.0, 1.0, 2.0, 3.0, 0.0];
        let y = [1.0, 1.0, 2.0, 2.0, 0.0];
        // mean x = 1.2, mean y = 1.2; Σdxdy = 3.8, Σdx² = 6.8, Σdy² = 2.8
        let oracle = 3.8 / (6.8f64 * 2.8).sqrt();
        assert!((pearson(&x, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn pearson_anticorrelation_and_degenerate() {
        use Emotion::Anger;
        let gv = [0u8, 1, 2, 3, 1];
        let g: Vec<_> = gv
            .iter()
            .enumerate()
            .map(|(i, &v)| gold(&i.to_string(), Track::B, &[(Anger, v)]))
            .collect();
        let p: Vec<_> = gv
            .iter()
            .enumerate()
            .map(|(i, &v)| pred(&i.to_string(), &[(Anger, 3 - v)]))
            .collect();
        let r = pearson_report(&p, &g).unwrap();
        assert!((r.per_emotion[&Anger] + 1.0).abs() < 1e-12);

        let flat: Vec<_> = gv
            .iter()
            .enumerate()
            .map(|(i, _)| pred(&i.to_string(), &[(Anger, 2)]))
            .collect();
        let r = pearson_report(&flat, &g).unwrap();
        assert_eq!(r.per_emotion[&Anger], 0.0);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn malformed_counts_as_zeros() {
        use Emotion::Joy;
        let g = vec![gold("a", Track::A, &[(Joy, 1)]), gold("b", Track::A, &[(Joy, 1)])];
        let p = vec![pred("a", &[(Joy, 1)]), malformed("b")];
        let r = f1_report(&p, &g).unwrap();
        assert_eq!(r.n_malformed, 1);
        assert!((r.paper_macro - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn id_mismatch() {
        use Emotion::Joy;
        let g = vec![gold("a", Track::A, &[(Joy, 1)])];
        assert!(f1_report(&[pred("b", &[(Joy, 1)])], &g).is_err());
        assert!(f1_report(&[], &g).is_err());
        let dup = vec![gold("a", Track::A, &[(Joy, 1)]), gold("b", Track::A, &[(Joy, 1)])];
        assert!(f1_report(&[pred("a", &[(Joy, 1)]), pred("a", &[(Joy, 1)])], &dup).is_err());
    }

    #[test]
    fn alignment_is_by_id_not_position() {
        use Emotion::Joy;
        let g = vec![gold("a", Track::A, &[(Joy, 1)]), gold("b", Track::A, &[(Joy, 0)])];
        let p = vec![pred("b", &[(Joy, 0)]), pred("a", &[(Joy, 1)])];
        assert_eq!(f1_report(&p, &g).unwrap().paper_macro, 1.0);
    }

    #[test]
    fn failure_rate() {
        let ok = pred("a", &[]);
        assert_eq!(parse_failure_rate(&[ok.clone(), ok.clone()]).rate, 0.0);
        let r = parse_failure_rate(&[ok.clone(), ok.clone(), ok, malformed("x")]);
        assert_eq!((r.malformed, r.total, r.rate), (1, 4, 0.25));
        assert_eq!(parse_failure_rate(&[]).rate, 0.0);
    }

    #[test]
    fn breakdown_shares() {
        use Emotion::Sadness;
        let gv = [3u8, 0, 2, 1];
        let pv = [2u8, 1, 0, 1];
        let g: Vec<_> = gv
            .iter()
            .enumerate()
            .map(|(i, &v)| gold(&i.to_string(), Track::B, &[(Sadness, v)]))
            .collect();
        let p: Vec<_> = pv
            .iter()
            .enumerate()
            .map(|(i, &v)| pred(&i.to_string(), &[(Sadness, v)]))
            .collect();
        let b = error_breakdown(&p, &g, Track::B).unwrap();
        assert_eq!(b.total_errors(), 3);
        assert!((b.off_by_one_share.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.false_neutral_share.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.confusion[&Sadness][3][2], 1);

        let none = error_breakdown(
            &g.iter()
                .map(|s| pred(&s.id, &[(Sadness, s.values[&Sadness])]))
                .collect::<Vec<_>>(),
            &g,
            Track::B,
        )
        .unwrap();
        assert!(none.per_emotion.is_empty());
        assert_eq!(none.off_by_one_share, None);
        assert!(format_breakdown(&none).contains("n/a"));
    }

    #[test]
    fn track_a_breakdown_splits_fp_fn() {
        use Emotion::Fear;
        let g = vec![gold("a", Track::A, &[(Fear, 1)]), gold("b", Track::A, &[(Fear, 0)])];
        let p = vec![pred("a", &[(Fear, 0)]), pred("b", &[(Fear, 1)])];
        let b = error_breakdown(&p, &g, Track::A).unwrap();
        let e = &b.per_emotion[&Fear];
        assert_eq!((e.over, e.under, e.false_neutral), (1, 1, 1));
        assert_eq!(b.off_by_one_share, None);
        assert_eq!(b.false_neutral_share, Some(0.5));
    }

    #[test]
    fn table_layout() {
        let mut per = BTreeMap::new();
        per.insert(Emotion::Anger, 0.5);
        per.insert(Emotion::Joy, 0.25);
        let r = MetricReport {
            metric: "f1".into(),
            paper_macro: 0.4,
            paper_micro: 0.375,
            per_emotion: per,
            n_samples: 2,
            n_malformed: 0,
            warnings: vec![],
        };
        let t = format_table(&[("SP", &r), ("DPO", &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("Method"));
        assert!(lines[0].contains("Anger") && lines[0].contains("Joy"));
        assert!(lines[2].contains("0.400") && lines[2].contains("0.375"));
        assert_eq!(lines[2].len(), lines[0].len());
    }
}
