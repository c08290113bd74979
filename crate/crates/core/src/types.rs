//! Domain types shared by every stage of the extraction pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::word_tokenize;

/// A word- or subword-level unit of text.
///
/// `char_start` / `char_end` are byte offsets into the source text, so
/// `&source[token.char_start..token.char_end] == token.text` always holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    /// Index of the whitespace-delimited word this token belongs to.
    pub word_index: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, char_start: usize, char_end: usize, word_index: usize) -> Self {
        Self {
            text: text.into(),
            char_start,
            char_end,
            word_index,
        }
    }

    /// Checks the offset invariants of a token sequence against its source.
    pub fn check_sequence(tokens: &[Token], source: &str) -> Vec<String> {
        let mut problems = Vec::new();
        let mut prev_word = 0;
        for (i, t) in tokens.iter().enumerate() {
            if t.text.is_empty() {
                problems.push(format!("token {i}: text is empty"));
            }
            if t.char_start >= t.char_end {
                problems.push(format!(
                    "token {i}: char_start {} >= char_end {}",
                    t.char_start, t.char_end
                ));
            } else if source.get(t.char_start..t.char_end) != Some(t.text.as_str()) {
                problems.push(format!("token {i}: text {:?} does not match source slice", t.text));
            }
            if t.word_index < prev_word {
                problems.push(format!(
                    "token {i}: word_index decreases ({} after {prev_word})",
                    t.word_index
                ));
            }
            prev_word = t.word_index;
        }
        problems
    }
}

/// The three question tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BioTag {
    /// `B-Question`: first token of a question.
    B,
    /// `I-Question`: any later token of a question.
    I,
    /// `O`: outside every question.
    O,
}

impl BioTag {
    pub const ALL: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];

    pub fn as_str(self) -> &'static str {
        match self {
            BioTag::B => "B-Question",
            BioTag::I => "I-Question",
            BioTag::O => "O",
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid tag {0:?}: expected one of \"B-Question\", \"I-Question\", \"O\"")]
pub struct ParseTagError(pub String);

impl FromStr for BioTag {
    type Err = ParseTagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B-Question" => Ok(BioTag::B),
            "I-Question" => Ok(BioTag::I),
            "O" => Ok(BioTag::O),
            other => Err(ParseTagError(other.to_string())),
        }
    }
}

impl Serialize for BioTag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for BioTag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Granularity a tag sequence is expressed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagLevel {
    Word,
    Subtoken,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagSequence {
    pub tags: Vec<BioTag>,
    pub level: TagLevel,
}

impl TagSequence {
    pub fn new(tags: Vec<BioTag>, level: TagLevel) -> Self {
        Self { tags, level }
    }

    pub fn words(tags: Vec<BioTag>) -> Self {
        Self::new(tags, TagLevel::Word)
    }

    pub fn subtokens(tags: Vec<BioTag>) -> Self {
        Self::new(tags, TagLevel::Subtoken)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Index of the first `I` that does not follow a `B` or `I`, if any.
    pub fn first_orphan(&self) -> Option<usize> {
        let mut prev = BioTag::O;
        for (i, &t) in self.tags.iter().enumerate() {
            if t == BioTag::I && prev == BioTag::O {
                return Some(i);
            }
            prev = t;
        }
        None
    }

    /// True iff every `I` is preceded by a `B` or an `I`.
    pub fn is_well_formed(&self) -> bool {
        self.first_orphan().is_none()
    }
}

/// One extracted question, as an inclusive range of word indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuestionSpan {
    pub start_word: usize,
    pub end_word: usize,
    pub text: String,
}

impl QuestionSpan {
    pub fn new(start_word: usize, end_word: usize, text: impl Into<String>) -> Self {
        Self {
            start_word,
            end_word,
            text: text.into(),
        }
    }

    /// Builds a span whose text is the single-space join of `words[start..=end]`.
    ///
    /// Panics if the range is out of bounds.
    pub fn from_words(start_word: usize, end_word: usize, words: &[Token]) -> Self {
        Self::new(start_word, end_word, join_words(&words[start_word..=end_word]))
    }

    pub fn len(&self) -> usize {
        self.end_word + 1 - self.start_word
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlap(&self, other: &QuestionSpan) -> usize {
        let lo = self.start_word.max(other.start_word);
        let hi = self.end_word.min(other.end_word);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }
}

pub(crate) fn join_words(words: &[Token]) -> String {
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&w.text);
    }
    out
}

/// Checks that spans are well ordered and pairwise disjoint.
pub fn span_list_violations(spans: &[QuestionSpan]) -> Vec<String> {
    let mut problems = Vec::new();
    for (i, s) in spans.iter().enumerate() {
        if s.start_word > s.end_word {
            problems.push(format!(
                "spans[{i}]: start_word {} > end_word {}",
                s.start_word, s.end_word
            ));
        }
        if i > 0 {
            let prev = &spans[i - 1];
            if s.start_word < prev.start_word {
                problems.push(format!("spans[{i}]: not sorted by start_word"));
            } else if s.start_word <= prev.end_word {
                problems.push(format!(
                    "spans[{i}]: overlaps spans[{}] ({}..={} vs {}..={})",
                    i - 1,
                    prev.start_word,
                    prev.end_word,
                    s.start_word,
                    s.end_word
                ));
            }
        }
    }
    problems
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleSource {
    #[default]
    Manual,
    Augmented,
    Ocr,
}

impl fmt::Display for ExampleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExampleSource::Manual => "manual",
            ExampleSource::Augmented => "augmented",
            ExampleSource::Ocr => "ocr",
        })
    }
}

impl FromStr for ExampleSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "manual" => Ok(Self::Manual),
            "augmented" => Ok(Self::Augmented),
            "ocr" => Ok(Self::Ocr),
            other => Err(format!("unknown example source {other:?}")),
        }
    }
}

/// Source text plus its gold question spans.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub id: String,
    pub text: String,
    pub spans: Vec<QuestionSpan>,
    #[serde(default)]
    pub source: ExampleSource,
}

impl AnnotatedExample {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        spans: Vec<QuestionSpan>,
        source: ExampleSource,
    ) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            spans,
            source,
        }
    }
}

/// Lists every invariant the example breaks; empty when the example is valid.
pub fn validate_example(example: &AnnotatedExample) -> Vec<String> {
    let mut problems = span_list_violations(&example.spans);
    let words = word_tokenize(&example.text);
    for (i, s) in example.spans.iter().enumerate() {
        if s.start_word > s.end_word {
            continue;
        }
        if s.end_word >= words.len() {
            problems.push(format!(
                "spans[{i}]: end_word {} out of range for {} words",
                s.end_word,
                words.len()
            ));
            continue;
        }
        let expected = join_words(&words[s.start_word..=s.end_word]);
        if s.text != expected {
            problems.push(format!(
                "spans[{i}]: text mismatch, span has {:?} but source words are {:?}",
                s.text, expected
            ));
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    const SENTENCE: &str = "Answer the following. What is force?";

    fn example(spans: Vec<QuestionSpan>) -> AnnotatedExample {
        AnnotatedExample::new("ex", SENTENCE, spans, ExampleSource::Manual)
    }

    #[test]
    fn worked_example_is_valid() {
        let ex = example(vec![QuestionSpan::new(3, 5, "What is force?")]);
        assert!(validate_example(&ex).is_empty());
    }

    #[test]
    fn overlapping_spans_reported_once() {
        let ex = example(vec![
            QuestionSpan::new(0, 2, "Answer the following."),
            QuestionSpan::new(2, 4, "following. What is"),
        ]);
        let v = validate_example(&ex);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("overlaps"));
    }

    #[test]
    fn text_mismatch_reported() {
        let ex = example(vec![QuestionSpan::new(3, 5, "What is gravity?")]);
        let v = validate_example(&ex);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("text mismatch"));
    }

    #[test]
    fn out_of_range_span() {
        let ex = example(vec![QuestionSpan::new(5, 6, "force? x")]);
        let v = validate_example(&ex);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("out of range"));
    }

    #[test]
    fn tag_strings() {
        for t in BioTag::ALL {
            assert_eq!(t.as_str().parse::<BioTag>().unwrap(), t);
        }
        for bad in ["B", "I", "o", "B-Answer", "", "I-question"] {
            assert!(bad.parse::<BioTag>().is_err(), "{bad}");
        }
        assert_eq!(serde_json::to_string(&BioTag::B).unwrap(), "\"B-Question\"");
        assert!(serde_json::from_str::<BioTag>("\"B-Answer\"").is_err());
    }

    #[test]
    fn well_formedness() {
        use BioTag::*;
        assert!(TagSequence::words(vec![O, O, O, B, I, I]).is_well_formed());
        assert!(TagSequence::words(vec![]).is_well_formed());
        assert_eq!(TagSequence::words(vec![O, I]).first_orphan(), Some(1));
        assert_eq!(TagSequence::words(vec![I]).first_orphan(), Some(0));
    }

    #[test]
    fn token_sequence_check() {
        let toks = word_tokenize(SENTENCE);
        assert!(Token::check_sequence(&toks, SENTENCE).is_empty());
        let bad = vec![Token::new("x", 0, 1, 1), Token::new("the", 7, 10, 0)];
        let v = Token::check_sequence(&bad, SENTENCE);
        assert_eq!(v.len(), 2, "{v:?}");
    }
}
