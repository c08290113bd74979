//! Whitespace word splitting and greedy longest-match subword splitting.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::types::Token;

pub const DEFAULT_CONTINUATION_PREFIX: &str = "##";
pub const DEFAULT_UNKNOWN_TOKEN: &str = "[UNK]";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("failed to read vocabulary {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary is empty")]
    Empty,
    #[error("vocabulary line {line}: empty entry")]
    EmptyEntry { line: usize },
    #[error("unknown token {0:?} is not in the vocabulary")]
    MissingUnknown(String),
}

/// Subword inventory used by the model-side tokenizer.
///
/// Entry ids are their position in the list (line number in a vocab file,
/// counting from zero).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
    ids: HashMap<String, u32>,
    continuation_prefix: String,
    unknown_token: String,
    lowercase: bool,
    max_entry_chars: usize,
}

impl Vocabulary {
    pub fn new<I, S>(entries: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_markers(entries, DEFAULT_CONTINUATION_PREFIX, DEFAULT_UNKNOWN_TOKEN)
    }

    pub fn with_markers<I, S>(entries: I, continuation_prefix: &str, unknown_token: &str) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<String> = entries.into_iter().map(Into::into).collect();
        if entries.is_empty() {
            return Err(VocabError::Empty);
        }
        let mut ids = HashMap::with_capacity(entries.len());
        let mut max_entry_chars = 0;
        for (i, e) in entries.iter().enumerate() {
            if e.is_empty() {
                return Err(VocabError::EmptyEntry { line: i + 1 });
            }
            max_entry_chars = max_entry_chars.max(e.chars().count());
            // First occurrence keeps its id.
            ids.entry(e.clone()).or_insert(i as u32);
        }
        if !ids.contains_key(unknown_token) {
            return Err(VocabError::MissingUnknown(unknown_token.to_string()));
        }
        Ok(Self {
            entries,
            ids,
            continuation_prefix: continuation_prefix.to_string(),
            unknown_token: unknown_token.to_string(),
            lowercase: false,
            max_entry_chars,
        })
    }

    /// Reads a vocabulary file: UTF-8, one entry per line.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(content.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)))
    }

    /// Lowercase words before matching. Off by default.
    pub fn lowercased(mut self, yes: bool) -> Self {
        self.lowercase = yes;
        self
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.ids.contains_key(piece)
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.ids.get(piece).copied()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn continuation_prefix(&self) -> &str {
        &self.continuation_prefix
    }

    pub fn unknown_token(&self) -> &str {
        &self.unknown_token
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }
}

/// Maps each word to the contiguous range of subtokens derived from it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alignment {
    pub word_to_subtokens: Vec<Range<usize>>,
}

impl Alignment {
    pub fn num_words(&self) -> usize {
        self.word_to_subtokens.len()
    }

    pub fn num_subtokens(&self) -> usize {
        self.word_to_subtokens.last().map_or(0, |r| r.end)
    }

    /// True iff the ranges are non-empty and tile `0..num_subtokens` in order.
    pub fn is_partition(&self) -> bool {
        let mut next = 0;
        for r in &self.word_to_subtokens {
            if r.start != next || r.end <= r.start {
                return false;
            }
            next = r.end;
        }
        true
    }
}

/// Splits text into maximal runs of non-whitespace characters.
pub fn word_tokenize(text: &str) -> Vec<Token> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                words.push(Token::new(&text[s..i], s, i, words.len()));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push(Token::new(&text[s..], s, text.len(), words.len()));
    }
    words
}

/// A word's pieces, each with its char range inside the word.
fn split_word(word: &str, vocab: &Vocabulary) -> Option<Vec<(String, Range<usize>)>> {
    let chars: Vec<char> = if vocab.lowercase {
        word.chars()
            .map(|c| {
                let mut lower = c.to_lowercase();
                match (lower.next(), lower.next()) {
                    (Some(l), None) => l,
                    // Multi-char lowercase forms would break offset mapping.
                    _ => c,
                }
            })
            .collect()
    } else {
        word.chars().collect()
    };

    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let longest = (chars.len() - start).min(vocab.max_entry_chars);
        let mut found = None;
        for end in (start + 1..=start + longest).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(&vocab.continuation_prefix);
            }
            candidate.extend(&chars[start..end]);
            if vocab.contains(&candidate) {
                found = Some(end);
                break;
            }
        }
        let end = found?;
        pieces.push((candidate.clone(), start..end));
        start = end;
    }
    Some(pieces)
}

/// Greedy longest-match split of one word.
///
/// Falls back to `[unknown_token]` when some position has no vocabulary match.
pub fn subword_tokenize(word: &str, vocab: &Vocabulary) -> Vec<String> {
    match split_word(word, vocab) {
        Some(pieces) if !pieces.is_empty() => pieces.into_iter().map(|(p, _)| p).collect(),
        _ => vec![vocab.unknown_token.clone()],
    }
}

/// Output of [`tokenize_full`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokenized {
    pub words: Vec<Token>,
    /// Subtokens as source slices (no continuation prefix).
    pub subtokens: Vec<Token>,
    /// Vocabulary pieces, parallel to `subtokens`; this is what a model sees.
    pub pieces: Vec<String>,
    pub alignment: Alignment,
}

pub fn tokenize_full(text: &str, vocab: &Vocabulary) -> Tokenized {
    tokenize_words(word_tokenize(text), vocab)
}

/// Subword-tokenizes already split words.
pub fn tokenize_words(words: Vec<Token>, vocab: &Vocabulary) -> Tokenized {
    let mut subtokens = Vec::new();
    let mut pieces = Vec::new();
    let mut ranges = Vec::with_capacity(words.len());
    for word in &words {
        let begin = subtokens.len();
        match split_word(&word.text, vocab) {
            Some(split) if !split.is_empty() => {
                // char index -> byte offset within the word
                let mut offsets: Vec<usize> = word.text.char_indices().map(|(b, _)| b).collect();
                offsets.push(word.text.len());
                for (piece, r) in split {
                    let (s, e) = (offsets[r.start], offsets[r.end]);
                    subtokens.push(Token::new(
                        &word.text[s..e],
                        word.char_start + s,
                        word.char_start + e,
                        word.word_index,
                    ));
                    pieces.push(piece);
                }
            }
            _ => {
                subtokens.push(word.clone());
                pieces.push(vocab.unknown_token.clone());
            }
        }
        ranges.push(begin..subtokens.len());
    }
    Tokenized {
        words,
        subtokens,
        pieces,
        alignment: Alignment {
            word_to_subtokens: ranges,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture_vocab() -> Vocabulary {
        Vocabulary::new([
            "[PAD]",
            "[UNK]",
            "[CLS]",
            "[SEP]",
            "what",
            "What",
            "is",
            "force",
            "##s",
            "##?",
            "##.",
            "for",
            "##ce",
            "the",
            "Answer",
            "following",
        ])
        .unwrap()
    }

    /// Exhaustive reference: at each position, try every end and keep the
    /// longest in-vocab candidate.
    fn brute_longest_match(word: &str, vocab: &Vocabulary) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let mut best: Option<(usize, String)> = None;
            for end in pos + 1..=chars.len() {
                let body: String = chars[pos..end].iter().collect();
                let cand = if pos == 0 { body } else { format!("##{body}") };
                if vocab.contains(&cand) {
                    best = Some((end, cand));
                }
            }
            match best {
                Some((end, cand)) => {
                    out.push(cand);
                    pos = end;
                }
                None => return vec!["[UNK]".to_string()],
            }
        }
        out
    }

    #[test]
    fn words_of_worked_example() {
        let words = word_tokenize("Answer the following. What is force?");
        let texts: Vec<&str> = words.iter().map(|w| w.text.as_str()).collect();
        assert_eq!(texts, ["Answer", "the", "following.", "What", "is", "force?"]);
        assert_eq!(words[5].char_start, 30);
        assert_eq!(words[5].word_index, 5);
    }

    #[test]
    fn empty_and_padded_text() {
        assert!(word_tokenize("").is_empty());
        assert!(word_tokenize(" \n\t ").is_empty());
        let words = word_tokenize("  a  b ");
        assert_eq!(words.len(), 2);
        assert_eq!((words[0].char_start, words[0].char_end), (2, 3));
        assert_eq!((words[1].char_start, words[1].char_end), (5, 6));
    }

    #[test]
    fn subword_cases() {
        let v = fixture_vocab();
        assert_eq!(subword_tokenize("force", &v), ["force"]);
        assert_eq!(subword_tokenize("forces", &v), ["force", "##s"]);
        assert_eq!(subword_tokenize("forces", &v), brute_longest_match("forces", &v));
        assert_eq!(subword_tokenize("Ω≈ç", &v), ["[UNK]"]);
        // partial match followed by a dead end is still unknown
        assert_eq!(subword_tokenize("forcez", &v), ["[UNK]"]);
    }

    #[test]
    fn full_tokenization_alignment() {
        let v = fixture_vocab();
        let t = tokenize_full("What is force?", &v);
        assert_eq!(t.words.len(), 3);
        assert_eq!(t.subtokens.len(), 4);
        assert_eq!(t.pieces, ["What", "is", "force", "##?"]);
        assert_eq!(t.alignment.word_to_subtokens, vec![0..1, 1..2, 2..4]);
        assert_eq!(t.subtokens[3].text, "?");
        assert_eq!((t.subtokens[3].char_start, t.subtokens[3].char_end), (13, 14));
        assert!(Token::check_sequence(&t.subtokens, "What is force?").is_empty());

        let empty = tokenize_full("", &v);
        assert!(empty.words.is_empty() && empty.subtokens.is_empty());
        assert_eq!(empty.alignment, Alignment::default());

        let single = tokenize_full("force", &v);
        assert_eq!(single.alignment.word_to_subtokens, vec![0..1]);
    }

    #[test]
    fn unknown_spans_whole_word() {
        let v = fixture_vocab();
        let t = tokenize_full("is Ω≈ç", &v);
        assert_eq!(t.pieces, ["is", "[UNK]"]);
        assert_eq!(t.subtokens[1].text, "Ω≈ç");
        assert_eq!(t.subtokens[1].char_start, 3);
    }

    #[test]
    fn lowercasing_is_opt_in() {
        let v = Vocabulary::new(["[UNK]", "force", "##s"]).unwrap();
        assert_eq!(subword_tokenize("FORCES", &v), ["[UNK]"]);
        let v = v.lowercased(true);
        assert_eq!(subword_tokenize("FORCES", &v), ["force", "##s"]);
        let t = tokenize_full("FORCES", &v);
        assert_eq!(t.subtokens[1].text, "S");
    }

    #[test]
    fn vocabulary_invariants() {
        assert!(matches!(Vocabulary::new(Vec::<String>::new()), Err(VocabError::Empty)));
        assert!(matches!(
            Vocabulary::new(["a", ""]),
            Err(VocabError::EmptyEntry { line: 2 })
        ));
        assert!(matches!(Vocabulary::new(["a"]), Err(VocabError::MissingUnknown(_))));
        let v = fixture_vocab();
        assert_eq!(v.id("[UNK]"), Some(1));
    }

    fn vocab_strategy() -> impl Strategy<Value = Vocabulary> {
        prop::collection::vec("(##)?[abc]{1,3}", 0..12).prop_map(|mut e| {
            e.push("[UNK]".to_string());
            Vocabulary::new(e).unwrap()
        })
    }

    proptest! {
        #[test]
        fn alignment_partitions_subtokens(text in "[abc \n]{0,40}", vocab in vocab_strategy()) {
            let t = tokenize_full(&text, &vocab);
            prop_assert!(t.alignment.is_partition());
            prop_assert_eq!(t.alignment.num_words(), t.words.len());
            prop_assert_eq!(t.alignment.num_subtokens(), t.subtokens.len());
            prop_assert_eq!(t.pieces.len(), t.subtokens.len());
            prop_assert!(Token::check_sequence(&t.subtokens, &text).is_empty());
        }

        #[test]
        fn greedy_matches_brute_force(word in "[abc]{1,8}", vocab in vocab_strategy()) {
            let pieces = subword_tokenize(&word, &vocab);
            prop_assert_eq!(&pieces, &brute_longest_match(&word, &vocab));
            prop_assert_eq!(pieces, subword_tokenize(&word, &vocab));
        }

        #[test]
        fn pieces_reconstruct_word(word in "[abc]{1,8}", vocab in vocab_strategy()) {
            let pieces = subword_tokenize(&word, &vocab);
            if pieces != ["[UNK]"] {
                prop_assert!(!pieces[0].starts_with("##"));
                let mut joined = pieces[0].clone();
                for p in &pieces[1..] {
                    prop_assert!(p.starts_with("##"));
                    joined.push_str(&p[2..]);
                }
                prop_assert_eq!(joined, word);
                prop_assert!(pieces.iter().all(|p| vocab.contains(p)));
            }
        }

        #[test]
        fn retokenizing_normalized_text_is_stable(text in "\\PC{0,60}") {
            let words = word_tokenize(&text);
            let normalized = words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
            let again: Vec<String> = word_tokenize(&normalized).into_iter().map(|w| w.text).collect();
            let first: Vec<String> = words.into_iter().map(|w| w.text).collect();
            prop_assert_eq!(first, again);
        }
    }
}
