//! Entity-level precision and recall over whole questions.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::QuestionSpan;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("document {0:?} has predictions but no gold entry")]
    MissingGold(String),
    #[error("document {0:?} has gold spans but no prediction entry")]
    MissingPrediction(String),
    #[error("invalid match criterion {0:?}: expected exact, text or iou:<threshold in (0,1]>")]
    BadCriterion(String),
}

/// When a predicted question counts as the gold question.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MatchCriterion {
    /// Identical word boundaries.
    ExactSpan,
    /// Equal text after collapsing whitespace and case folding.
    #[default]
    ExactTextNormalized,
    /// Word intersection over word union at least the threshold.
    Iou(f64),
}

impl MatchCriterion {
    pub fn iou(threshold: f64) -> Result<Self, EvalError> {
        if threshold > 0.0 && threshold <= 1.0 {
            Ok(Self::Iou(threshold))
        } else {
            Err(EvalError::BadCriterion(format!("iou:{threshold}")))
        }
    }

    pub fn matches(&self, pred: &QuestionSpan, gold: &QuestionSpan) -> bool {
        match *self {
            Self::ExactSpan => pred.start_word == gold.start_word && pred.end_word == gold.end_word,
            Self::ExactTextNormalized => normalize_text(&pred.text) == normalize_text(&gold.text),
            Self::Iou(threshold) => word_iou(pred, gold) >= threshold,
        }
    }
}

impl FromStr for MatchCriterion {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" | "exact_span" => Ok(Self::ExactSpan),
            "text" | "exact_text_normalized" => Ok(Self::ExactTextNormalized),
            _ => {
                let t = s
                    .strip_prefix("iou:")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| EvalError::BadCriterion(s.to_string()))?;
                Self::iou(t).map_err(|_| EvalError::BadCriterion(s.to_string()))
            }
        }
    }
}

impl fmt::Display for MatchCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ExactSpan => f.write_str("exact"),
            Self::ExactTextNormalized => f.write_str("text"),
            Self::Iou(t) => write!(f, "iou:{t}"),
        }
    }
}

pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn word_iou(a: &QuestionSpan, b: &QuestionSpan) -> f64 {
    let inter = a.overlap(b);
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Greedy one-to-one matching, gold in order.
///
/// Each gold span takes the unmatched prediction with the largest word
/// overlap, ties going to the earlier-starting prediction. Returns
/// `(pred_index, gold_index)` pairs sorted by gold index.
pub fn match_spans(pred: &[QuestionSpan], gold: &[QuestionSpan], criterion: MatchCriterion) -> Vec<(usize, usize)> {
    // Normalize each text once rather than per pair.
    let keys = |spans: &[QuestionSpan]| -> Vec<String> {
        match criterion {
            MatchCriterion::ExactTextNormalized => spans.iter().map(|s| normalize_text(&s.text)).collect(),
            _ => Vec::new(),
        }
    };
    let (pred_keys, gold_keys) = (keys(pred), keys(gold));
    let is_match = |pi: usize, gi: usize| match criterion {
        MatchCriterion::ExactTextNormalized => pred_keys[pi] == gold_keys[gi],
        _ => criterion.matches(&pred[pi], &gold[gi]),
    };
    let mut used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (gi, g) in gold.iter().enumerate() {
        let best = pred
            .iter()
            .enumerate()
            .filter(|&(pi, _)| !used[pi] && is_match(pi, gi))
            .max_by(|(ai, a), (bi, b)| {
                a.overlap(g)
                    .cmp(&b.overlap(g))
                    .then(b.start_word.cmp(&a.start_word))
                    .then(bi.cmp(ai))
            })
            .map(|(pi, _)| pi);
        if let Some(pi) = best {
            used[pi] = true;
            pairs.push((pi, gi));
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub id: String,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub predicted_total: usize,
    pub gold_total: usize,
    pub precision: f64,
    pub recall: f64,
    pub per_document: Vec<DocumentCounts>,
}

fn ratio(num: usize, den: usize, other_total: usize) -> f64 {
    match (den, other_total) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => num as f64 / den as f64,
    }
}

impl EvalReport {
    /// Micro-averaged report from per-document counts.
    pub fn from_counts(per_document: Vec<DocumentCounts>) -> Self {
        let true_positives = per_document.iter().map(|d| d.true_positives).sum();
        let predicted_total = per_document.iter().map(|d| d.predicted).sum();
        let gold_total = per_document.iter().map(|d| d.gold).sum();
        Self {
            true_positives,
            predicted_total,
            gold_total,
            precision: ratio(true_positives, predicted_total, gold_total),
            recall: ratio(true_positives, gold_total, predicted_total),
            per_document,
        }
    }

    pub fn f1(&self) -> f64 {
        if self.precision + self.recall == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / (self.precision + self.recall)
        }
    }
}

/// Scores predictions against gold; both maps must cover the same documents.
pub fn evaluate(
    pred_per_doc: &BTreeMap<String, Vec<QuestionSpan>>,
    gold_per_doc: &BTreeMap<String, Vec<QuestionSpan>>,
    criterion: MatchCriterion,
) -> Result<EvalReport, EvalError> {
    if let Some(id) = pred_per_doc.keys().find(|k| !gold_per_doc.contains_key(*k)) {
        return Err(EvalError::MissingGold(id.clone()));
    }
    if let Some(id) = gold_per_doc.keys().find(|k| !pred_per_doc.contains_key(*k)) {
        return Err(EvalError::MissingPrediction(id.clone()));
    }
    let per_document = gold_per_doc
        .iter()
        .map(|(id, gold)| {
            let pred = &pred_per_doc[id];
            DocumentCounts {
                id: id.clone(),
                true_positives: match_spans(pred, gold, criterion).len(),
                predicted: pred.len(),
                gold: gold.len(),
            }
        })
        .collect();
    Ok(EvalReport::from_counts(per_document))
}

fn percent(x: f64) -> String {
    let p = (x * 1000.0).round() / 10.0;
    if p.fract() == 0.0 {
        format!("{p:.0}")
    } else {
        format!("{p:.1}")
    }
}

/// Plain-text comparison table with columns `S.No.`, `Model`, `Precision`,
/// `Recall`; metrics are percentages.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let header = ["S.No.", "Model", "Precision", "Recall"];
    let body: Vec<[String; 4]> = rows
        .iter()
        .enumerate()
        .map(|(i, (name, r))| {
            [
                (i + 1).to_string(),
                name.to_string(),
                percent(r.precision),
                percent(r.recall),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let mut l = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                l.push_str("  ");
            }
            let _ = write!(l, "{cell:<w$}");
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(&header);
    for row in &body {
        line(&row.each_ref().map(String::as_str));
    }
    out
}
