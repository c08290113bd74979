mod common;

use common::{random_spans, random_words};
use proptest::prelude::*;
use qx_core::tagger::OracleTable;
use qx_core::{encode_tags, extract, AnnotatedExample, BioTag, RepairPolicy, RuleSet, TaggerKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn oracle_of_gold_extracts_gold(seed in any::<u64>(), n in 0usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (text, words) = random_words(&mut rng, n);
        let gold = random_spans(&mut rng, &words);
        let example = AnnotatedExample::new("doc", text.clone(), gold.clone(), Default::default());
        let kind = TaggerKind::Oracle(OracleTable::from_examples(&[example]).unwrap());
        for policy in [RepairPolicy::Strict, RepairPolicy::Iob2Repair] {
            prop_assert_eq!(&extract(&kind, "doc", &text, policy).unwrap(), &gold);
        }
    }

    #[test]
    fn rule_tags_are_well_formed_and_decode_to_rule_spans(seed in any::<u64>(), n in 0usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (text, words) = random_words(&mut rng, n);
        let rules = RuleSet::default_rules();
        let kind = TaggerKind::Rule(rules.clone());
        let tags = kind.tag("doc", &text, &words).unwrap();
        prop_assert_eq!(tags.len(), words.len());
        prop_assert!(tags.is_well_formed());
        let spans = qx_core::rule_extract(&text, &rules);
        prop_assert_eq!(&encode_tags(&spans, words.len()).unwrap(), &tags);
        prop_assert_eq!(&extract(&kind, "doc", &text, RepairPolicy::Strict).unwrap(), &spans);
    }
}

#[test]
fn oracle_table_returns_stored_sequence() {
    use BioTag::*;
    let mut table = OracleTable::new();
    table.insert("d1", qx_core::TagSequence::words(vec![O, O, O, B, I, I]));
    let text = "Answer the following. What is force?";
    let words = qx_core::word_tokenize(text);
    let kind = TaggerKind::Oracle(table);
    assert_eq!(kind.tag("d1", text, &words).unwrap().tags, [O, O, O, B, I, I]);
    assert!(kind.tag("d2", text, &words).is_err());
    assert!(kind
        .tag("d1", "What is force?", &qx_core::word_tokenize("What is force?"))
        .is_err());
}

#[test]
fn rules_on_plain_text_tag_nothing() {
    let text = "no questions here";
    let words = qx_core::word_tokenize(text);
    let tags = TaggerKind::Rule(RuleSet::default_rules())
        .tag("d", text, &words)
        .unwrap();
    assert_eq!(tags.tags, [BioTag::O; 3]);
}

#[test]
fn empty_text_extracts_nothing() {
    let kind = TaggerKind::Oracle(OracleTable::new());
    assert!(extract(&kind, "missing", "", RepairPolicy::Strict).unwrap().is_empty());
    assert!(extract(&kind, "missing", " \n\t", RepairPolicy::Strict)
        .unwrap()
        .is_empty());
}
