//! Training-set expansion: wrap gold questions in question-free noise and
//! splice in questions borrowed from other examples.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::normalize_text;
use crate::tokenize::word_tokenize;
use crate::types::{validate_example, AnnotatedExample, ExampleSource, QuestionSpan};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("base dataset is empty")]
    EmptyBase,
    #[error("noise probability is positive but the noise pool is empty")]
    EmptyNoisePool,
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("base example {id:?} is invalid: {message}")]
    InvalidBase { id: String, message: String },
    #[error("noise snippet {snippet:?} contains the gold question {question:?}")]
    NoiseContainsQuestion { snippet: String, question: String },
    #[error("noise line {line}: snippet is blank")]
    BlankSnippet { line: usize },
    #[error("failed to read noise pool {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub target_count: usize,
    pub p_prepend_noise: f64,
    pub p_append_noise: f64,
    pub p_insert_question: f64,
    pub max_inserted_questions: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            target_count: 22_000,
            p_prepend_noise: 0.5,
            p_append_noise: 0.5,
            p_insert_question: 0.3,
            max_inserted_questions: 2,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.target_count == 0 {
            return Err(AugmentError::InvalidConfig("target_count must be positive".into()));
        }
        for (name, p) in [
            ("p_prepend_noise", self.p_prepend_noise),
            ("p_append_noise", self.p_append_noise),
            ("p_insert_question", self.p_insert_question),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AugmentError::InvalidConfig(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        Ok(())
    }

    fn needs_noise(&self) -> bool {
        self.p_prepend_noise > 0.0 || self.p_append_noise > 0.0
    }
}

/// Question-free text snippets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NoisePool {
    snippets: Vec<String>,
}

impl NoisePool {
    pub fn new<I, S>(snippets: I) -> Result<Self, AugmentError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        for (i, s) in snippets.into_iter().enumerate() {
            let s: String = s.into();
            if s.trim().is_empty() {
                return Err(AugmentError::BlankSnippet { line: i + 1 });
            }
            out.push(s);
        }
        Ok(Self { snippets: out })
    }

    /// One snippet per line; blank lines are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AugmentError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| AugmentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(content.lines().filter(|l| !l.trim().is_empty()))
    }

    pub fn snippets(&self) -> &[String] {
        &self.snippets
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    /// Fails if any snippet contains one of the gold questions.
    pub fn check_against(&self, base: &[AnnotatedExample]) -> Result<(), AugmentError> {
        let questions: HashSet<String> = base
            .iter()
            .flat_map(|e| &e.spans)
            .map(|s| normalize_text(&s.text))
            .collect();
        for snippet in &self.snippets {
            let norm = normalize_text(snippet);
            if let Some(q) = questions.iter().find(|q| norm.contains(q.as_str())) {
                return Err(AugmentError::NoiseContainsQuestion {
                    snippet: snippet.clone(),
                    question: q.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Trims a snippet and gives it terminal punctuation.
fn normalize_noise(snippet: &str) -> String {
    let mut s = snippet.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.ends_with(['.', '?', '!', ':', ';']) {
        s.push('.');
    }
    s
}

/// How one augmented example was put together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentTrace {
    pub base_index: usize,
    /// Word ranges of the prepended / appended noise.
    pub noise_words: Vec<Range<usize>>,
    /// Indices into the output spans of the borrowed questions.
    pub inserted_spans: Vec<usize>,
}

/// Gold question texts of a base set, for checking augmented output.
#[derive(Debug, Clone, Default)]
pub struct QuestionIndex {
    texts: HashSet<String>,
}

impl QuestionIndex {
    pub fn new(base: &[AnnotatedExample]) -> Self {
        Self {
            texts: base.iter().flat_map(|e| &e.spans).map(|s| s.text.clone()).collect(),
        }
    }

    /// True iff every span text of `example` is a gold question text.
    pub fn verify(&self, example: &AnnotatedExample) -> bool {
        example.spans.iter().all(|s| self.texts.contains(&s.text))
    }
}

pub fn verify_augmented(example: &AnnotatedExample, base: &[AnnotatedExample]) -> bool {
    QuestionIndex::new(base).verify(example)
}

pub fn augment(
    base: &[AnnotatedExample],
    noise: &NoisePool,
    cfg: &AugmentConfig,
) -> Result<Vec<AnnotatedExample>, AugmentError> {
    Ok(augment_with_trace(base, noise, cfg)?
        .into_iter()
        .map(|(e, _)| e)
        .collect())
}

/// Like [`augment`], also reporting where noise and borrowed questions went.
pub fn augment_with_trace(
    base: &[AnnotatedExample],
    noise: &NoisePool,
    cfg: &AugmentConfig,
) -> Result<Vec<(AnnotatedExample, AugmentTrace)>, AugmentError> {
    cfg.validate()?;
    if base.is_empty() {
        return Err(AugmentError::EmptyBase);
    }
    if cfg.needs_noise() && noise.is_empty() {
        return Err(AugmentError::EmptyNoisePool);
    }
    for ex in base {
        if let Some(message) = validate_example(ex).into_iter().next() {
            return Err(AugmentError::InvalidBase {
                id: ex.id.clone(),
                message,
            });
        }
    }
    noise.check_against(base)?;

    // All gold questions, grouped by example so "other examples" is a range complement.
    let mut questions: Vec<(String, usize)> = Vec::new();
    let mut owned: Vec<Range<usize>> = Vec::with_capacity(base.len());
    for ex in base {
        let start = questions.len();
        for s in &ex.spans {
            questions.push((s.text.clone(), s.len()));
        }
        owned.push(start..questions.len());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(cfg.target_count);
    for i in 0..cfg.target_count {
        if order.is_empty() {
            order = (0..base.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let b = order.pop().expect("refilled above");
        let ex = &base[b];

        let mut borrowed: Vec<(usize, usize)> = Vec::new(); // (slot word position, question index)
        let foreign = questions.len() - owned[b].len();
        if rng.gen_bool(cfg.p_insert_question) && cfg.max_inserted_questions > 0 && foreign > 0 {
            let n_words = word_tokenize(&ex.text).len();
            let mut slots: Vec<usize> = vec![0, n_words];
            for s in &ex.spans {
                slots.push(s.start_word);
                slots.push(s.end_word + 1);
            }
            slots.sort_unstable();
            slots.dedup();
            let k = rng.gen_range(1..=cfg.max_inserted_questions);
            for _ in 0..k {
                let mut q = rng.gen_range(0..foreign);
                if q >= owned[b].start {
                    q += owned[b].len();
                }
                let slot = slots[rng.gen_range(0..slots.len())];
                borrowed.push((slot, q));
            }
            borrowed.sort_by_key(|&(slot, _)| slot);
        }

        let prepend = rng.gen_bool(cfg.p_prepend_noise).then(|| noise_pick(&mut rng, noise));
        let append = rng.gen_bool(cfg.p_append_noise).then(|| noise_pick(&mut rng, noise));

        let (example, trace) = assemble(
            format!("{}#aug{i:05}", ex.id),
            ex,
            b,
            &borrowed,
            &questions,
            prepend,
            append,
        );
        out.push((example, trace));
    }
    Ok(out)
}

fn noise_pick(rng: &mut ChaCha8Rng, noise: &NoisePool) -> String {
    normalize_noise(&noise.snippets[rng.gen_range(0..noise.snippets.len())])
}

fn assemble(
    id: String,
    ex: &AnnotatedExample,
    base_index: usize,
    borrowed: &[(usize, usize)],
    questions: &[(String, usize)],
    prepend: Option<String>,
    append: Option<String>,
) -> (AnnotatedExample, AugmentTrace) {
    let words = word_tokenize(&ex.text);
    let mut text = String::with_capacity(ex.text.len() + 64);
    let mut spans: Vec<QuestionSpan> = Vec::with_capacity(ex.spans.len() + borrowed.len());
    let mut inserted_at = Vec::with_capacity(borrowed.len());
    let mut noise_words = Vec::new();

    let lead = match &prepend {
        Some(n) => {
            let count = word_tokenize(n).len();
            noise_words.push(0..count);
            text.push_str(n);
            count
        }
        None => 0,
    };

    // Base text with borrowed questions spliced in at word positions.
    let mut body = String::with_capacity(ex.text.len() + 64);
    let mut cursor = 0;
    let mut added = 0;
    for &(slot, q) in borrowed {
        let (q_text, q_len) = &questions[q];
        let at = words.get(slot).map_or(ex.text.len(), |w| w.char_start);
        body.push_str(&ex.text[cursor..at]);
        cursor = at;
        if slot == words.len() && !body.is_empty() && !body.ends_with(char::is_whitespace) {
            body.push(' ');
        }
        let start = lead + slot + added;
        inserted_at.push(start);
        spans.push(QuestionSpan::new(start, start + q_len - 1, q_text.clone()));
        body.push_str(q_text);
        if slot < words.len() {
            body.push(' ');
        }
        added += q_len;
    }
    body.push_str(&ex.text[cursor..]);
    for s in &ex.spans {
        let shift: usize = borrowed
            .iter()
            .filter(|&&(slot, _)| slot <= s.start_word)
            .map(|&(_, q)| questions[q].1)
            .sum();
        spans.push(QuestionSpan::new(
            lead + s.start_word + shift,
            lead + s.end_word + shift,
            s.text.clone(),
        ));
    }
    spans.sort_by_key(|s| s.start_word);
    let inserted_spans = inserted_at
        .iter()
        .map(|&start| {
            spans
                .iter()
                .position(|s| s.start_word == start)
                .expect("inserted span present")
        })
        .collect();

    if !text.is_empty() && !body.is_empty() {
        text.push(' ');
    }
    text.push_str(&body);

    if let Some(n) = &append {
        let before = lead + words.len() + added;
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(n);
        noise_words.push(before..before + word_tokenize(n).len());
    }

    let modified = prepend.is_some() || append.is_some() || !borrowed.is_empty();
    let example = AnnotatedExample {
        id,
        text: if modified { text } else { ex.text.clone() },
        spans,
        source: ExampleSource::Augmented,
    };
    let trace = AugmentTrace {
        base_index,
        noise_words,
        inserted_spans,
    };
    (example, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::encode_tags;
    use crate::types::BioTag::*;

    fn what_is_force() -> AnnotatedExample {
        AnnotatedExample::new(
            "f",
            "What is force?",
            vec![QuestionSpan::new(0, 2, "What is force?")],
            ExampleSource::Manual,
        )
    }

    fn zero_cfg(target_count: usize) -> AugmentConfig {
        AugmentConfig {
            target_count,
            p_prepend_noise: 0.0,
            p_append_noise: 0.0,
            p_insert_question: 0.0,
            max_inserted_questions: 0,
            seed: 7,
        }
    }

    #[test]
    fn prepended_noise_reproduces_worked_example() {
        let noise = NoisePool::new(["Answer the following."]).unwrap();
        let cfg = AugmentConfig {
            p_prepend_noise: 1.0,
            ..zero_cfg(1)
        };
        let out = augment(&[what_is_force()], &noise, &cfg).unwrap();
        assert_eq!(out[0].text, "Answer the following. What is force?");
        assert_eq!(out[0].spans, [QuestionSpan::new(3, 5, "What is force?")]);
        assert_eq!(out[0].source, ExampleSource::Augmented);
        assert_eq!(encode_tags(&out[0].spans, 6).unwrap().tags, [O, O, O, B, I, I]);
        assert!(validate_example(&out[0]).is_empty());
    }

    #[test]
    fn noise_gets_terminal_punctuation() {
        let noise = NoisePool::new(["  Answer   the following  "]).unwrap();
        let cfg = AugmentConfig {
            p_append_noise: 1.0,
            ..zero_cfg(1)
        };
        let out = augment(&[what_is_force()], &noise, &cfg).unwrap();
        assert_eq!(out[0].text, "What is force? Answer the following.");
    }

    #[test]
    fn zero_probabilities_permute_base() {
        let base: Vec<_> = (0..5)
            .map(|i| {
                let text = format!("Note {i}. What is item {i}?");
                let words = word_tokenize(&text);
                AnnotatedExample::new(
                    format!("b{i}"),
                    text,
                    vec![QuestionSpan::from_words(2, 5, &words)],
                    ExampleSource::Manual,
                )
            })
            .collect();
        let out = augment(&base, &NoisePool::default(), &zero_cfg(5)).unwrap();
        let mut got: Vec<_> = out.iter().map(|e| (e.text.clone(), e.spans.clone())).collect();
        let mut want: Vec<_> = base.iter().map(|e| (e.text.clone(), e.spans.clone())).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn borrowed_questions_land_between_spans() {
        let a = AnnotatedExample::new(
            "a",
            "Header\nWhat is force? Why?",
            vec![
                QuestionSpan::new(1, 3, "What is force?"),
                QuestionSpan::new(4, 4, "Why?"),
            ],
            ExampleSource::Manual,
        );
        let b = AnnotatedExample::new(
            "b",
            "Find the mass.",
            vec![QuestionSpan::new(0, 2, "Find the mass.")],
            ExampleSource::Manual,
        );
        let cfg = AugmentConfig {
            p_insert_question: 1.0,
            max_inserted_questions: 2,
            ..zero_cfg(50)
        };
        let base = [a, b];
        let out = augment_with_trace(&base, &NoisePool::default(), &cfg).unwrap();
        let index = QuestionIndex::new(&base);
        let mut saw_multi = false;
        for (ex, trace) in &out {
            assert!(validate_example(ex).is_empty(), "{ex:?}: {:?}", validate_example(ex));
            assert!(index.verify(ex));
            let own = base[trace.base_index].spans.len();
            assert_eq!(ex.spans.len(), own + trace.inserted_spans.len());
            saw_multi |= trace.inserted_spans.len() == 2;
        }
        assert!(saw_multi);
    }

    #[test]
    fn single_example_cannot_borrow() {
        let cfg = AugmentConfig {
            p_insert_question: 1.0,
            ..zero_cfg(3)
        };
        let out = augment(&[what_is_force()], &NoisePool::default(), &cfg).unwrap();
        assert!(out.iter().all(|e| e.text == "What is force?"));
    }

    #[test]
    fn error_paths() {
        let noise = NoisePool::new(["Read carefully."]).unwrap();
        assert!(matches!(
            augment(&[], &noise, &AugmentConfig::default()),
            Err(AugmentError::EmptyBase)
        ));
        assert!(matches!(
            augment(&[what_is_force()], &NoisePool::default(), &AugmentConfig::default()),
            Err(AugmentError::EmptyNoisePool)
        ));
        let bad = AugmentConfig {
            p_append_noise: 1.5,
            ..AugmentConfig::default()
        };
        assert!(matches!(
            augment(&[what_is_force()], &noise, &bad),
            Err(AugmentError::InvalidConfig(_))
        ));
        let dirty = NoisePool::new(["Attempt all. What is  force? Thanks"]).unwrap();
        assert!(matches!(
            augment(&[what_is_force()], &dirty, &AugmentConfig::default()),
            Err(AugmentError::NoiseContainsQuestion { .. })
        ));
        assert!(matches!(
            NoisePool::new(["ok", "  "]),
            Err(AugmentError::BlankSnippet { line: 2 })
        ));
    }

    #[test]
    fn verify_detects_invented_question() {
        let base = [what_is_force()];
        assert!(verify_augmented(&base[0], &base));
        let mut edited = base[0].clone();
        edited.spans[0].text = "What is mass?".into();
        assert!(!verify_augmented(&edited, &base));
    }
}
