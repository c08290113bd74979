//! Shared helpers for the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use qx_core::eval::normalize_text;
use qx_core::{word_tokenize, MatchCriterion, QuestionSpan, Token};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// `n` space-separated words drawn from a small alphabet, so texts repeat.
pub fn random_words(rng: &mut ChaCha8Rng, n: usize) -> (String, Vec<Token>) {
    const POOL: &[&str] = &[
        "what", "is", "force", "find", "x", "2.5", "Q.No.", "mass?", "the", "Area",
    ];
    let text = (0..n)
        .map(|_| POOL[rng.gen_range(0..POOL.len())])
        .collect::<Vec<_>>()
        .join(" ");
    let words = word_tokenize(&text);
    (text, words)
}

/// Sorted, non-overlapping random spans over `words`.
pub fn random_spans(rng: &mut ChaCha8Rng, words: &[Token]) -> Vec<QuestionSpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < words.len() {
        if rng.gen_bool(0.35) {
            let end = (i + rng.gen_range(0..5)).min(words.len() - 1);
            spans.push(QuestionSpan::from_words(i, end, words));
            i = end + 1 + rng.gen_range(0..2);
        } else {
            i += 1;
        }
    }
    spans
}

/// Criterion check written directly from the definitions.
pub fn oracle_matches(criterion: MatchCriterion, p: &QuestionSpan, g: &QuestionSpan) -> bool {
    match criterion {
        MatchCriterion::ExactSpan => p.start_word == g.start_word && p.end_word == g.end_word,
        MatchCriterion::ExactTextNormalized => normalize_text(&p.text) == normalize_text(&g.text),
        MatchCriterion::Iou(t) => {
            let lo = p.start_word.max(g.start_word);
            let hi = p.end_word.min(g.end_word);
            let inter = if lo <= hi { hi - lo + 1 } else { 0 };
            let union = (p.end_word - p.start_word + 1) + (g.end_word - g.start_word + 1) - inter;
            inter as f64 / union as f64 >= t
        }
    }
}

/// Largest one-to-one matching by exhaustive search.
pub fn brute_force_tp(pred: &[QuestionSpan], gold: &[QuestionSpan], criterion: MatchCriterion) -> usize {
    fn go(gi: usize, used: &mut Vec<bool>, pred: &[QuestionSpan], gold: &[QuestionSpan], c: MatchCriterion) -> usize {
        if gi == gold.len() {
            return 0;
        }
        let mut best = go(gi + 1, used, pred, gold, c);
        for pi in 0..pred.len() {
            if !used[pi] && oracle_matches(c, &pred[pi], &gold[gi]) {
                used[pi] = true;
                best = best.max(1 + go(gi + 1, used, pred, gold, c));
                used[pi] = false;
            }
        }
        best
    }
    go(0, &mut vec![false; pred.len()], pred, gold, criterion)
}

/// Precision and recall from totals, with 0/0 counted as perfect only when
/// both sides are empty.
pub fn oracle_scores(tp: usize, predicted: usize, gold: usize) -> (f64, f64) {
    if predicted == 0 && gold == 0 {
        return (1.0, 1.0);
    }
    let p = if predicted == 0 {
        0.0
    } else {
        tp as f64 / predicted as f64
    };
    let r = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
    (p, r)
}
