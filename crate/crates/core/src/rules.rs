//! Rule-based question extraction from start and end patterns.
//!
//! A ruleset file is UTF-8 text with one directive per line:
//!
//! ```text
//! # comment
//! mode: start_to_end_match
//! start: \bQ\.?\s*No\.?\s*\d+
//! end: \?
//! ```
//!
//! Start patterns open a question at their match (or at their first capture
//! group, when it participates). Matches are found on raw byte offsets and
//! snapped outward to whole words.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use thiserror::Error;

use crate::tokenize::word_tokenize;
use crate::types::{QuestionSpan, Token};

const DEFAULT_RULES: &str = include_str!("../rules/default.rules");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("failed to read ruleset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ruleset has no start patterns")]
    NoStartPatterns,
    #[error("line {line}: invalid pattern {pattern:?}: {message}")]
    InvalidPattern {
        line: usize,
        pattern: String,
        message: String,
    },
    #[error("line {line}: unknown mode {mode:?}")]
    UnknownMode { line: usize, mode: String },
    #[error("line {line}: expected `start:`, `end:` or `mode:` directive, got {text:?}")]
    BadDirective { line: usize, text: String },
}

/// Where a question opened by a start match ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RuleMode {
    /// Up to the word before the next start match, or the end of the text.
    #[default]
    StartToNextStart,
    /// At the first end-pattern match after the start, cut short by the next start.
    StartToEndMatch,
}

impl FromStr for RuleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "start_to_next_start" => Ok(Self::StartToNextStart),
            "start_to_end_match" => Ok(Self::StartToEndMatch),
            other => Err(other.to_string()),
        }
    }
}

impl fmt::Display for RuleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StartToNextStart => "start_to_next_start",
            Self::StartToEndMatch => "start_to_end_match",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    start_patterns: Vec<Regex>,
    end_patterns: Vec<Regex>,
    mode: RuleMode,
}

fn compile(pattern: &str, line: usize) -> Result<Regex, RuleError> {
    Regex::new(pattern).map_err(|e| RuleError::InvalidPattern {
        line,
        pattern: pattern.to_string(),
        message: e.to_string(),
    })
}

impl RuleSet {
    pub fn new<S: AsRef<str>>(start_patterns: &[S], end_patterns: &[S], mode: RuleMode) -> Result<Self, RuleError> {
        if start_patterns.is_empty() {
            return Err(RuleError::NoStartPatterns);
        }
        let start_patterns = start_patterns
            .iter()
            .enumerate()
            .map(|(i, p)| compile(p.as_ref(), i + 1))
            .collect::<Result<_, _>>()?;
        let end_patterns = end_patterns
            .iter()
            .enumerate()
            .map(|(i, p)| compile(p.as_ref(), i + 1))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            start_patterns,
            end_patterns,
            mode,
        })
    }

    /// Parses ruleset text; errors carry 1-based line numbers.
    pub fn parse(source: &str) -> Result<Self, RuleError> {
        let mut start_patterns = Vec::new();
        let mut end_patterns = Vec::new();
        let mut mode = RuleMode::default();
        for (i, raw) in source.lines().enumerate() {
            let line = i + 1;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let Some((key, value)) = text.split_once(':') else {
                return Err(RuleError::BadDirective {
                    line,
                    text: text.to_string(),
                });
            };
            let value = value.trim();
            match key.trim() {
                "start" => start_patterns.push(compile(value, line)?),
                "end" => end_patterns.push(compile(value, line)?),
                "mode" => {
                    mode = value.parse().map_err(|mode| RuleError::UnknownMode { line, mode })?;
                }
                _ => {
                    return Err(RuleError::BadDirective {
                        line,
                        text: text.to_string(),
                    })
                }
            }
        }
        if start_patterns.is_empty() {
            return Err(RuleError::NoStartPatterns);
        }
        Ok(Self {
            start_patterns,
            end_patterns,
            mode,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&source)
    }

    /// The bundled ruleset: enumerator starts ("Q.No. 5", "Question 2", "17.",
    /// "(i)"), sentence-initial interrogatives, and `?` as the end pattern.
    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_RULES).expect("bundled ruleset is valid")
    }

    pub fn start_patterns(&self) -> impl Iterator<Item = &str> {
        self.start_patterns.iter().map(Regex::as_str)
    }

    pub fn end_patterns(&self) -> impl Iterator<Item = &str> {
        self.end_patterns.iter().map(Regex::as_str)
    }

    pub fn mode(&self) -> RuleMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: RuleMode) -> Self {
        self.mode = mode;
        self
    }
}

pub fn load_ruleset(path: impl AsRef<Path>) -> Result<RuleSet, RuleError> {
    RuleSet::load(path)
}

/// First word whose end lies past `offset`: the word containing it, or the next one.
fn word_at_or_after(words: &[Token], offset: usize) -> Option<usize> {
    let i = words.partition_point(|w| w.char_end <= offset);
    (i < words.len()).then_some(i)
}

/// Last word starting before `offset`.
fn word_before(words: &[Token], offset: usize) -> Option<usize> {
    words.partition_point(|w| w.char_start < offset).checked_sub(1)
}

pub fn rule_extract(text: &str, rules: &RuleSet) -> Vec<QuestionSpan> {
    let words = word_tokenize(text);
    rule_extract_words(text, &words, rules)
}

/// [`rule_extract`] over words already split from `text`.
pub fn rule_extract_words(text: &str, words: &[Token], rules: &RuleSet) -> Vec<QuestionSpan> {
    // (offset, pattern index, anchor end)
    let mut anchors: Vec<(usize, usize, usize)> = Vec::new();
    for (p, re) in rules.start_patterns.iter().enumerate() {
        for caps in re.captures_iter(text) {
            let m = caps.get(1).or_else(|| caps.get(0)).expect("group 0 always matches");
            anchors.push((m.start(), p, m.end()));
        }
    }
    anchors.sort_unstable();

    // One start per word; the earliest offset, then the earliest pattern, wins.
    let mut starts: Vec<(usize, usize)> = Vec::new();
    for (offset, _, anchor_end) in anchors {
        let Some(w) = word_at_or_after(words, offset) else {
            continue;
        };
        if starts.last().is_some_and(|&(prev, _)| prev >= w) {
            continue;
        }
        starts.push((w, anchor_end.max(words[w].char_start)));
    }

    let mut ends: Vec<(usize, usize)> = Vec::new();
    if rules.mode == RuleMode::StartToEndMatch {
        for re in &rules.end_patterns {
            ends.extend(re.find_iter(text).map(|m| (m.start(), m.end())));
        }
        ends.sort_unstable();
    }

    let mut spans = Vec::with_capacity(starts.len());
    for (k, &(start, search_from)) in starts.iter().enumerate() {
        let next = starts.get(k + 1).map_or(words.len(), |s| s.0);
        let mut end = next - 1;
        if rules.mode == RuleMode::StartToEndMatch {
            let i = ends.partition_point(|&(s, _)| s < search_from);
            if let Some(&(s, e)) = ends.get(i) {
                let last = if e > s {
                    word_before(words, e)
                } else {
                    word_before(words, s + 1)
                };
                if let Some(last) = last {
                    end = end.min(last.max(start));
                }
            }
        }
        spans.push(QuestionSpan::from_words(start, end, words));
    }
    spans
}
