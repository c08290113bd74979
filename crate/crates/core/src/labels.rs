//! Conversions between word tags, subtoken tags and question spans.

use thiserror::Error;

use crate::tokenize::Alignment;
use crate::types::{span_list_violations, BioTag, QuestionSpan, TagLevel, TagSequence, Token};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("length mismatch: expected {expected} tags, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("expected a {expected:?}-level tag sequence, got {found:?}")]
    WrongLevel { expected: TagLevel, found: TagLevel },
    #[error("malformed tag sequence: I-Question at index {index} does not follow B-Question or I-Question")]
    MalformedTags { index: usize },
    #[error("span {start}..={end} is out of range for {n_words} words")]
    SpanOutOfRange { start: usize, end: usize, n_words: usize },
    #[error("invalid span list: {0}")]
    InvalidSpans(String),
}

/// How [`decode_spans`] treats an `I` that does not continue a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RepairPolicy {
    /// Reject the sequence.
    Strict,
    /// Treat the orphan `I` as a `B`.
    #[default]
    Iob2Repair,
}

fn expect_level(seq: &TagSequence, level: TagLevel) -> Result<(), LabelError> {
    if seq.level != level {
        return Err(LabelError::WrongLevel {
            expected: level,
            found: seq.level,
        });
    }
    Ok(())
}

/// Spreads word tags over subtokens.
///
/// The first subtoken of a word keeps the word's tag; continuation subtokens
/// become `I` under a `B` or `I` word and `O` under an `O` word.
pub fn project_tags(word_tags: &TagSequence, alignment: &Alignment) -> Result<TagSequence, LabelError> {
    expect_level(word_tags, TagLevel::Word)?;
    if word_tags.len() != alignment.num_words() {
        return Err(LabelError::LengthMismatch {
            expected: alignment.num_words(),
            found: word_tags.len(),
        });
    }
    let mut out = Vec::with_capacity(alignment.num_subtokens());
    for (&tag, range) in word_tags.tags.iter().zip(&alignment.word_to_subtokens) {
        let continuation = match tag {
            BioTag::O => BioTag::O,
            BioTag::B | BioTag::I => BioTag::I,
        };
        for k in range.clone() {
            out.push(if k == range.start { tag } else { continuation });
        }
    }
    Ok(TagSequence::subtokens(out))
}

/// Each word takes the tag of its first subtoken.
pub fn collapse_tags(subtoken_tags: &TagSequence, alignment: &Alignment) -> Result<TagSequence, LabelError> {
    expect_level(subtoken_tags, TagLevel::Subtoken)?;
    if subtoken_tags.len() != alignment.num_subtokens() || !alignment.is_partition() {
        return Err(LabelError::LengthMismatch {
            expected: alignment.num_subtokens(),
            found: subtoken_tags.len(),
        });
    }
    let tags = alignment
        .word_to_subtokens
        .iter()
        .map(|r| subtoken_tags.tags[r.start])
        .collect();
    Ok(TagSequence::words(tags))
}

/// Inclusive word ranges of every maximal `B I*` run.
pub fn decode_ranges(tags: &TagSequence, policy: RepairPolicy) -> Result<Vec<(usize, usize)>, LabelError> {
    let mut ranges = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &tag) in tags.tags.iter().enumerate() {
        match tag {
            BioTag::B => {
                if let Some(s) = open.replace(i) {
                    ranges.push((s, i - 1));
                }
            }
            BioTag::I => {
                if open.is_none() {
                    match policy {
                        RepairPolicy::Strict => return Err(LabelError::MalformedTags { index: i }),
                        RepairPolicy::Iob2Repair => open = Some(i),
                    }
                }
            }
            BioTag::O => {
                if let Some(s) = open.take() {
                    ranges.push((s, i - 1));
                }
            }
        }
    }
    if let Some(s) = open {
        ranges.push((s, tags.len() - 1));
    }
    Ok(ranges)
}

/// Decodes word-level tags into question spans whose text is rebuilt from `words`.
pub fn decode_spans(
    tags: &TagSequence,
    words: &[Token],
    policy: RepairPolicy,
) -> Result<Vec<QuestionSpan>, LabelError> {
    expect_level(tags, TagLevel::Word)?;
    if tags.len() != words.len() {
        return Err(LabelError::LengthMismatch {
            expected: words.len(),
            found: tags.len(),
        });
    }
    Ok(decode_ranges(tags, policy)?
        .into_iter()
        .map(|(s, e)| QuestionSpan::from_words(s, e, words))
        .collect())
}

/// Word tags for a sorted, disjoint span list.
pub fn encode_tags(spans: &[QuestionSpan], n_words: usize) -> Result<TagSequence, LabelError> {
    if let Some(problem) = span_list_violations(spans).into_iter().next() {
        return Err(LabelError::InvalidSpans(problem));
    }
    let mut tags = vec![BioTag::O; n_words];
    for s in spans {
        if s.end_word >= n_words {
            return Err(LabelError::SpanOutOfRange {
                start: s.start_word,
                end: s.end_word,
                n_words,
            });
        }
        tags[s.start_word] = BioTag::B;
        for t in &mut tags[s.start_word + 1..=s.end_word] {
            *t = BioTag::I;
        }
    }
    Ok(TagSequence::words(tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::word_tokenize;
    use BioTag::*;

    fn align(sizes: &[usize]) -> Alignment {
        let mut start = 0;
        Alignment {
            word_to_subtokens: sizes
                .iter()
                .map(|&n| {
                    let r = start..start + n;
                    start += n;
                    r
                })
                .collect(),
        }
    }

    fn words(n: usize) -> Vec<crate::types::Token> {
        word_tokenize(&(0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "))
    }

    #[test]
    fn projection_rules() {
        let p = project_tags(&TagSequence::words(vec![B]), &align(&[3])).unwrap();
        assert_eq!(p.tags, [B, I, I]);
        assert_eq!(p.level, TagLevel::Subtoken);
        let p = project_tags(&TagSequence::words(vec![O]), &align(&[2])).unwrap();
        assert_eq!(p.tags, [O, O]);
        let p = project_tags(&TagSequence::words(vec![I]), &align(&[1])).unwrap();
        assert_eq!(p.tags, [I]);
    }

    #[test]
    fn projection_length_mismatch() {
        let err = project_tags(&TagSequence::words(vec![B, I]), &align(&[3])).unwrap_err();
        assert_eq!(err, LabelError::LengthMismatch { expected: 1, found: 2 });
        let err = project_tags(&TagSequence::subtokens(vec![B]), &align(&[1])).unwrap_err();
        assert!(matches!(err, LabelError::WrongLevel { .. }));
    }

    #[test]
    fn collapse_first_subtoken() {
        let c = collapse_tags(&TagSequence::subtokens(vec![B, I, I]), &align(&[1, 2])).unwrap();
        assert_eq!(c.tags, [B, I]);
        let c = collapse_tags(&TagSequence::subtokens(vec![O, O]), &align(&[2])).unwrap();
        assert_eq!(c.tags, [O]);
        assert!(collapse_tags(&TagSequence::subtokens(vec![O]), &align(&[2])).is_err());
    }

    #[test]
    fn decode_worked_example() {
        let w = word_tokenize("Answer the following. What is force?");
        let spans = decode_spans(&TagSequence::words(vec![O, O, O, B, I, I]), &w, RepairPolicy::Strict).unwrap();
        assert_eq!(spans, [QuestionSpan::new(3, 5, "What is force?")]);
    }

    #[test]
    fn decode_no_entities() {
        let spans = decode_spans(&TagSequence::words(vec![O, O]), &words(2), RepairPolicy::Strict).unwrap();
        assert!(spans.is_empty());
    }

    #[test]
    fn decode_repair_and_strict() {
        let tags = TagSequence::words(vec![I, I, O, B]);
        let spans = decode_spans(&tags, &words(4), RepairPolicy::Iob2Repair).unwrap();
        let ranges: Vec<_> = spans.iter().map(|s| (s.start_word, s.end_word)).collect();
        assert_eq!(ranges, [(0, 1), (3, 3)]);
        assert_eq!(
            decode_spans(&tags, &words(4), RepairPolicy::Strict).unwrap_err(),
            LabelError::MalformedTags { index: 0 }
        );
        let tags = TagSequence::words(vec![B, O, I]);
        assert_eq!(
            decode_ranges(&tags, RepairPolicy::Strict).unwrap_err(),
            LabelError::MalformedTags { index: 2 }
        );
    }

    #[test]
    fn adjacent_spans_stay_distinct() {
        let r = decode_ranges(&TagSequence::words(vec![B, I, B, I]), RepairPolicy::Strict).unwrap();
        assert_eq!(r, [(0, 1), (2, 3)]);
    }

    #[test]
    fn encode_cases() {
        let w = words(6);
        let t = encode_tags(&[QuestionSpan::from_words(3, 5, &w)], 6).unwrap();
        assert_eq!(t.tags, [O, O, O, B, I, I]);
        assert_eq!(encode_tags(&[], 4).unwrap().tags, [O, O, O, O]);
        let t = encode_tags(
            &[QuestionSpan::from_words(0, 0, &w), QuestionSpan::from_words(2, 3, &w)],
            4,
        )
        .unwrap();
        assert_eq!(t.tags, [B, O, B, I]);
    }

    #[test]
    fn encode_rejects_bad_spans() {
        let w = words(6);
        let overlapping = [QuestionSpan::from_words(0, 2, &w), QuestionSpan::from_words(2, 4, &w)];
        assert!(matches!(encode_tags(&overlapping, 6), Err(LabelError::InvalidSpans(_))));
        let out_of_range = [QuestionSpan::from_words(4, 5, &w)];
        assert!(matches!(
            encode_tags(&out_of_range, 5),
            Err(LabelError::SpanOutOfRange { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tag() -> impl Strategy<Value = BioTag> {
            prop_oneof![Just(B), Just(I), Just(O)]
        }

        /// Random sorted, disjoint ranges over `n` words.
        pub(crate) fn spans_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
            (0usize..40)
                .prop_flat_map(|n| {
                    (
                        Just(n),
                        prop::collection::vec(any::<bool>(), n),
                        prop::collection::vec(any::<bool>(), n),
                    )
                })
                .prop_map(|(n, starts, continues)| {
                    let mut spans: Vec<(usize, usize)> = Vec::new();
                    let mut i = 0;
                    while i < n {
                        if starts[i] {
                            let mut end = i;
                            while end + 1 < n && continues[end + 1] {
                                end += 1;
                            }
                            spans.push((i, end));
                            i = end + 1;
                        } else {
                            i += 1;
                        }
                    }
                    (n, spans)
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn collapse_inverts_project(
                pairs in prop::collection::vec((tag(), 1usize..4), 0..30)
            ) {
                let tags = TagSequence::words(pairs.iter().map(|p| p.0).collect());
                let a = align(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
                let projected = project_tags(&tags, &a).unwrap();
                prop_assert_eq!(projected.len(), a.num_subtokens());
                prop_assert_eq!(collapse_tags(&projected, &a).unwrap(), tags);
            }

            #[test]
            fn decode_inverts_encode((n, ranges) in spans_strategy()) {
                let w = words(n);
                let spans: Vec<_> = ranges.iter().map(|&(s, e)| QuestionSpan::from_words(s, e, &w)).collect();
                let tags = encode_tags(&spans, n).unwrap();
                prop_assert!(tags.is_well_formed());
                for policy in [RepairPolicy::Strict, RepairPolicy::Iob2Repair] {
                    prop_assert_eq!(&decode_spans(&tags, &w, policy).unwrap(), &spans);
                }
            }

            #[test]
            fn decoded_spans_are_increasing(tags in prop::collection::vec(tag(), 0..40)) {
                let r = decode_ranges(&TagSequence::words(tags), RepairPolicy::Iob2Repair).unwrap();
                for pair in r.windows(2) {
                    prop_assert!(pair[0].1 < pair[1].0);
                }
            }

            #[test]
            fn projection_preserves_well_formedness(
                pairs in prop::collection::vec((tag(), 1usize..4), 0..30)
            ) {
                let tags = TagSequence::words(pairs.iter().map(|p| p.0).collect());
                let a = align(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
                let projected = project_tags(&tags, &a).unwrap();
                prop_assert_eq!(projected.is_well_formed(), tags.is_well_formed());
                let word_spans = decode_ranges(&tags, RepairPolicy::Iob2Repair).unwrap().len();
                let sub_spans = decode_ranges(&projected, RepairPolicy::Iob2Repair).unwrap().len();
                prop_assert_eq!(word_spans, sub_spans);
            }
        }
    }
}
