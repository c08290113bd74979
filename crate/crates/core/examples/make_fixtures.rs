//! Regenerates the bundled fixtures under `crates/core/fixtures/`.
//!
//! ```text
//! cargo run -p qx-core --example make_fixtures
//! ```
//!
//! Output is deterministic; rerunning rewrites identical files.

use std::path::Path;

use qx_core::io::{ocr_words_to_json, write_dataset, DatasetFormat, OcrWord};
use qx_core::tagger::OracleTable;
use qx_core::{word_tokenize, AnnotatedExample, ExampleSource, QuestionSpan};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const QUESTIONS: &[&str] = &[
    "What is the SI unit of {q}?",
    "A body of mass {a} kg moves with a velocity of {b} m/s. Find its kinetic energy.",
    "Calculate the work done in lifting a {a} kg box through a height of {b} m.",
    "State Newton's second law of motion.",
    "Find the value of x if {a}x + {b} = {c}.",
    "How much force is needed to accelerate a {a} kg cart at {b} m/s²?",
    "Express {a} km/h in m/s.",
    "The radius of a sphere is {a} cm. Find its volume.",
    "Write the formula to find the area of a circle of radius {a} cm.",
    "Why does a ball thrown upward come back down?",
    "A train travels {a} km in {b} hours. What is its average speed?",
    "Define the term displacement.",
    "Explain why the sky appears blue.",
    "The density of a substance is {a} g/cm³ in CGS system. Find its value in SI units.",
    "Which quantity remains constant in uniform circular motion?",
    "If the sum of two numbers is {c} and their difference is {a}, find the numbers.",
    "Determine the pH of a solution with hydrogen ion concentration 10^-{a} M.",
    "A resistor of {a} ohm is connected to a {b} V battery. Calculate the current.",
    "Solve for y: {a}y - {b} = {c}.",
    "How many moles are present in {c} g of water?",
    "A body is projected at an angle of {a}° with a velocity of {b} m/s. What will be its horizontal range?",
    "The displacement of a particle is given by x = {a}t + {b}t². Calculate its velocity at t = {c} s.",
    "Find the lateral surface area of a pillar of height {a} m and radius {b} m.",
    "What is the ratio of the volume of a hemisphere of radius {a} cm to that of a sphere of radius {b} cm?",
    "A positive charge is moving towards a person. What will be the direction of magnetic field lines?",
    "Study the graph and find the relationship between magnetic field and distance.",
    "Prove that the angles opposite to equal sides of a triangle are equal.",
    "Convert {c} degree Celsius to Kelvin.",
    "What happens to the resistance of a wire when its length is doubled?",
    "Find the focal length of a convex lens of power {a} D.",
    "Give two examples of chemical changes.",
    "How long will a car moving at {b} m/s take to cover {c} m?",
    "Name the process by which plants make their food.",
    "Evaluate the integral of {a}x² from 0 to {b}.",
    "What is the probability of getting a sum of {a} when two dice are thrown?",
    "A cylinder has radius {a} cm and height {b} cm. Find its curved surface area.",
    "Describe an activity to show that light travels in a straight line.",
    "Find the median of the first {c} natural numbers.",
    "Why are alloys used for making electrical heating devices?",
    "Calculate the momentum of a {a} kg ball moving at {b} m/s.",
];

const QUANTITIES: &[&str] = &["force", "pressure", "power", "work", "charge", "resistance", "momentum"];

/// Question-free lines that surround questions in real queries.
const NOISE: &[&str] = &[
    "Answer the following.",
    "All questions are compulsory.",
    "Each question carries 2 marks.",
    "Each question carries 1 mark.",
    "Section B",
    "Section-II",
    "Case study-based questions are compulsory.",
    "Attempt any 4 sub parts from each question.",
    "General Instructions",
    "Maximum Marks: 80",
    "Time allowed: 3 hours",
    "Use of calculator is not permitted.",
    "Draw neat diagrams wherever necessary.",
    "Page 2 of 4",
    "Rough work",
    "Take g = 9.8 m/s² wherever required.",
    "Sir please solve this",
    "I am stuck on this one",
    "Please give a step by step solution",
    "Thanks in advance",
    "Chapter 4 Motion in a Plane",
    "Exercise 3.2",
    "Important for exams",
    "Doubt from today's class",
    "Physics Worksheet",
    "Class X Mathematics",
    "Read the passage carefully and answer.",
    "Considering A as origin, answer the questions below.",
    "[FIGURE]",
    "field lines? OR 1 1/2",
    "Name: ________ Roll No: ____",
    "Homework due Monday",
    "From the NCERT textbook",
    "Refer to the diagram above.",
    "Note: write neatly.",
];

const OPTIONS: &[&str] = &[
    "(a) 75 m² (b) 78.57 m² (c) 87.47 m² (d) 25.8 m²",
    "(a) πr²h (b) πrl (c) πr(l + r) (d) 2πr",
    "(a) 1 : 1 (b) 1 : 8 (c) 8 : 1 (d) 1 : 16",
    "(a) 85.9 m³ (b) 80 m³ (c) 98 m³ (d) 89.83 m³",
    "(a) 2 (b) 4 (c) 6 (d) 8",
];

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    template
        .replace("{a}", &rng.gen_range(2..=20).to_string())
        .replace("{b}", &format!("{:.1}", rng.gen_range(1.0..50.0f64)))
        .replace("{c}", &rng.gen_range(10..=200).to_string())
        .replace("{q}", QUANTITIES.choose(rng).unwrap())
}

fn enumerator(style: usize, k: usize) -> String {
    const ROMAN: [&str; 8] = ["i", "ii", "iii", "iv", "v", "vi", "vii", "viii"];
    match style {
        0 => format!("Q.No. {}", k + 5),
        1 => format!("Question {}", k + 1),
        2 => format!("{}.", k + 1),
        3 => format!("{})", k + 1),
        4 => format!("({})", ROMAN[k % ROMAN.len()]),
        _ => String::new(),
    }
}

/// Breaks a sentence into lines of roughly `width` characters.
fn wrap(text: &str, width: usize) -> String {
    let mut out = String::new();
    let mut line_len = 0;
    for w in text.split(' ') {
        if line_len > 0 && line_len + 1 + w.len() > width {
            out.push('\n');
            line_len = 0;
        } else if line_len > 0 {
            out.push(' ');
            line_len += 1;
        }
        out.push_str(w);
        line_len += w.len();
    }
    out
}

/// Accumulates text while tracking word positions of gold questions.
#[derive(Default)]
struct Builder {
    text: String,
    words: usize,
    spans: Vec<(usize, usize)>,
}

impl Builder {
    fn push(&mut self, piece: &str, sep: &str, question: bool) {
        let n = word_tokenize(piece).len();
        if n == 0 {
            return;
        }
        if !self.text.is_empty() {
            self.text.push_str(sep);
        }
        self.text.push_str(piece);
        if question {
            self.spans.push((self.words, self.words + n - 1));
        }
        self.words += n;
    }

    fn finish(self, id: String, source: ExampleSource) -> AnnotatedExample {
        let words = word_tokenize(&self.text);
        let spans = self
            .spans
            .iter()
            .map(|&(s, e)| QuestionSpan::from_words(s, e, &words))
            .collect();
        AnnotatedExample::new(id, self.text, spans, source)
    }
}

/// A query with 0-4 questions, optional enumerators, options and noise.
fn synthetic_query(rng: &mut ChaCha8Rng, id: String, max_questions: usize, noise: &[&str]) -> AnnotatedExample {
    let mut b = Builder::default();
    if rng.gen_bool(0.5) {
        b.push(noise.choose(rng).unwrap(), "\n", false);
    }
    let n_questions = rng.gen_range(1..=max_questions);
    let style = rng.gen_range(0..7);
    let mut picked: Vec<&str> = QUESTIONS.choose_multiple(rng, n_questions).copied().collect();
    picked.shuffle(rng);
    for (k, template) in picked.iter().enumerate() {
        let enumerator = enumerator(style, k);
        b.push(&enumerator, "\n", false);
        let mut question = fill(template, rng);
        let sep = if enumerator.is_empty() { "\n" } else { " " };
        if rng.gen_bool(0.15) {
            question = format!("{question}\n{}", OPTIONS.choose(rng).unwrap());
        }
        b.push(&wrap(&question, 60), sep, true);
        if rng.gen_bool(0.2) {
            b.push(noise.choose(rng).unwrap(), "\n", false);
        }
    }
    if rng.gen_bool(0.3) {
        b.push(noise.choose(rng).unwrap(), "\n", false);
    }
    b.finish(id, ExampleSource::Manual)
}

const ROW1_LINES: &[&str] = &[
    "Q.No. 5 2.928g of a substance occupies 2.44cm³. Express its density",
    "keeping significant figure in view.",
    "Q.No. 6 The density of substance is 12 x 10^-4 g/cm³ in CGS system.",
    "Find its value in SI units (Using Dimensional Method).",
    "Q.No. 7 The displacement (in meter) of a particle moving along x-axis",
    "is given by x = 9t + 0.4t². Calculate (a) the instantaneous velocity at",
    "t = 0.5s (b) instantaneous acceleration at t = 0.125s.",
    "Q.No. 8 A body is projected at an angled 45° with a velocity of 9.8m/s².",
    "What will be its horizontal range?",
];

/// Word boxes for the row-1 page: 28px lines, 8px per character, a raised
/// superscript word, and words emitted in a scrambled order.
fn row1_ocr(rng: &mut ChaCha8Rng) -> Vec<OcrWord> {
    let mut words = Vec::new();
    for (li, line) in ROW1_LINES.iter().enumerate() {
        let top = 40.0 + 36.0 * li as f64;
        let mut x = 30.0;
        for w in line.split(' ') {
            let width = 8.0 * w.chars().count() as f64;
            // superscripts sit 6px high, less than half the 28px line height
            let lift = if w.contains('³') || w.contains('²') { 6.0 } else { 0.0 };
            // a little per-word baseline jitter, as OCR boxes have
            let jitter = f64::from(rng.gen_range(-2i32..=2));
            words.push(OcrWord::new(
                w,
                [x, top - lift + jitter, x + width, top + 28.0 - lift + jitter],
                0,
            ));
            x += width + 8.0;
        }
    }
    words.shuffle(rng);
    words
}

fn row1_example() -> AnnotatedExample {
    let text = ROW1_LINES.join("\n");
    let words = word_tokenize(&text);
    // Question bodies exclude the "Q.No. N" enumerators.
    let mut spans = Vec::new();
    let mut start = None;
    for (i, w) in words.iter().enumerate() {
        if w.text == "Q.No." {
            if let Some(s) = start.take() {
                spans.push(QuestionSpan::from_words(s, i - 1, &words));
            }
        } else if i > 0 && words[i - 1].text == "Q.No." {
            start = Some(i + 1);
        }
    }
    if let Some(s) = start {
        spans.push(QuestionSpan::from_words(s, words.len() - 1, &words));
    }
    AnnotatedExample::new("table3_row1", text, spans, ExampleSource::Ocr)
}

fn vocabulary() -> String {
    let mut entries: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        .map(String::from)
        .to_vec();
    let common = [
        "what",
        "What",
        "is",
        "the",
        "The",
        "of",
        "a",
        "A",
        "force",
        "find",
        "Find",
        "its",
        "value",
        "in",
        "and",
        "Answer",
        "following",
        "question",
        "Question",
        "calculate",
        "Calculate",
        "density",
        "body",
        "mass",
        "velocity",
        "substance",
        "at",
        "to",
        "with",
        "how",
        "How",
        "why",
        "Why",
    ];
    entries.extend(common.map(String::from));
    entries.extend(["##s", "##ing", "##ed", "##ly"].map(String::from));
    for c in (0x21u8..0x7f).map(char::from) {
        entries.push(c.to_string());
        entries.push(format!("##{c}"));
    }
    let mut seen = std::collections::HashSet::new();
    entries.retain(|e| seen.insert(e.clone()));
    entries.iter().map(|e| format!("{e}\n")).collect()
}

fn main() -> anyhow::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir)?;

    // Noise used inside base examples is disjoint from the augmentation pool.
    let (inline_noise, pool_noise) = NOISE.split_at(12);

    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let base: Vec<_> = (0..300)
        .map(|i| synthetic_query(&mut rng, format!("base{i:03}"), 3, inline_noise))
        .collect();
    write_dataset(&base, dir.join("base300.jsonl"), DatasetFormat::Jsonl)?;

    let mut pool = pool_noise.join("\n");
    pool.push('\n');
    std::fs::write(dir.join("noise.txt"), pool)?;

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut corpus = vec![row1_example()];
    corpus.extend((1..20).map(|i| synthetic_query(&mut rng, format!("doc{i:02}"), 4, NOISE)));
    write_dataset(&corpus, dir.join("corpus20.jsonl"), DatasetFormat::Jsonl)?;
    std::fs::write(
        dir.join("corpus20.oracle.jsonl"),
        OracleTable::from_examples(&corpus)?.to_jsonl(),
    )?;

    let row1 = row1_example();
    std::fs::write(dir.join("table3_row1.txt"), format!("{}\n", row1.text))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    std::fs::write(dir.join("table3_row1.ocr.json"), ocr_words_to_json(&row1_ocr(&mut rng)))?;
    std::fs::write(
        dir.join("table3_row1.oracle.jsonl"),
        OracleTable::from_examples(&[row1])?.to_jsonl(),
    )?;

    std::fs::write(dir.join("vocab.txt"), vocabulary())?;
    Ok(())
}
