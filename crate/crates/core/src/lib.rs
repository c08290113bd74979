//! Question span extraction from student queries and OCR output.
//!
//! Text is split into words, each word is tagged `B-Question`, `I-Question`
//! or `O`, and maximal `B I*` runs become questions. Taggers are
//! interchangeable: a regex rule baseline, a remote model server, or stored
//! tags. The crate also covers the data side: subword alignment of tags,
//! training-set augmentation, dataset formats, OCR reading order, and
//! entity-level precision/recall.

pub mod augment;
pub mod cli;
pub mod eval;
pub mod io;
pub mod labels;
pub mod rules;
pub mod tagger;
pub mod tokenize;
pub mod types;

pub use augment::{augment, verify_augmented, AugmentConfig, NoisePool};
pub use eval::{evaluate, match_spans, EvalReport, MatchCriterion};
pub use labels::{collapse_tags, decode_spans, encode_tags, project_tags, RepairPolicy};
pub use rules::{rule_extract, RuleSet};
pub use tagger::{extract, TaggerKind};
pub use tokenize::{subword_tokenize, tokenize_full, word_tokenize, Vocabulary};
pub use types::{validate_example, AnnotatedExample, BioTag, ExampleSource, QuestionSpan, TagSequence, Token};
