//! Dataset formats and OCR ingestion.
//!
//! JSONL: one object per line,
//! `{"id":..,"text":..,"spans":[{"char_start":..,"char_end":..,"text":..}],"source":..}`,
//! with offsets counted in Unicode scalar values and `char_end` exclusive.
//!
//! CoNLL: one `token<TAB>tag` line per word and a blank line after every
//! document. Document metadata goes in `# key = value` lines before the
//! tokens (`id`, `source`, and `text` when the text is not just the tokens
//! joined by single spaces).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{decode_spans, encode_tags, RepairPolicy};
use crate::tokenize::word_tokenize;
use crate::types::{join_words, validate_example, AnnotatedExample, BioTag, ExampleSource, QuestionSpan, TagSequence};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: record {id:?}: {message}")]
    Misaligned { line: usize, id: String, message: String },
    #[error("record {id:?} is invalid: {message}")]
    InvalidExample { id: String, message: String },
    #[error("unknown dataset format {0:?}: expected jsonl or conll")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Jsonl,
    Conll,
}

impl FromStr for DatasetFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "conll" => Ok(Self::Conll),
            other => Err(DatasetError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Jsonl => "jsonl",
            Self::Conll => "conll",
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlSpan {
    char_start: usize,
    char_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    text: String,
    #[serde(default)]
    spans: Vec<JsonlSpan>,
    #[serde(default)]
    source: ExampleSource,
}

/// Byte offset of every char boundary, indexed by char position.
fn char_boundaries(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect()
}

fn byte_to_char(boundaries: &[usize], byte: usize) -> usize {
    boundaries
        .binary_search(&byte)
        .expect("token offsets lie on char boundaries")
}

/// Converts an example to its JSONL line (without the trailing newline).
pub fn example_to_jsonl(example: &AnnotatedExample) -> Result<String, DatasetError> {
    let words = word_tokenize(&example.text);
    let bounds = char_boundaries(&example.text);
    let mut spans = Vec::with_capacity(example.spans.len());
    for s in &example.spans {
        let (Some(first), Some(last)) = (words.get(s.start_word), words.get(s.end_word)) else {
            return Err(DatasetError::InvalidExample {
                id: example.id.clone(),
                message: format!("span {}..={} out of range", s.start_word, s.end_word),
            });
        };
        spans.push(JsonlSpan {
            char_start: byte_to_char(&bounds, first.char_start),
            char_end: byte_to_char(&bounds, last.char_end),
            text: Some(s.text.clone()),
        });
    }
    let record = JsonlRecord {
        id: example.id.clone(),
        text: example.text.clone(),
        spans,
        source: example.source,
    };
    Ok(serde_json::to_string(&record).expect("record serializes"))
}

/// Parses one JSONL line; `line` is used for error messages only.
pub fn example_from_jsonl(raw: &str, line: usize) -> Result<AnnotatedExample, DatasetError> {
    let record: JsonlRecord = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
        line,
        message: e.to_string(),
    })?;
    let words = word_tokenize(&record.text);
    let bounds = char_boundaries(&record.text);
    let misaligned = |message: String| DatasetError::Misaligned {
        line,
        id: record.id.clone(),
        message,
    };
    let mut spans = Vec::with_capacity(record.spans.len());
    for js in &record.spans {
        let (Some(&bs), Some(&be)) = (bounds.get(js.char_start), bounds.get(js.char_end)) else {
            return Err(misaligned(format!(
                "span {}..{} exceeds text length {}",
                js.char_start,
                js.char_end,
                bounds.len() - 1
            )));
        };
        let start = words.iter().position(|w| w.char_start == bs);
        let end = words.iter().position(|w| w.char_end == be);
        let (Some(start), Some(end)) = (start, end) else {
            return Err(misaligned(format!(
                "span {}..{} does not align to word boundaries",
                js.char_start, js.char_end
            )));
        };
        if start > end {
            return Err(misaligned(format!("span {}..{} is empty", js.char_start, js.char_end)));
        }
        let span = QuestionSpan::from_words(start, end, &words);
        if let Some(t) = &js.text {
            if *t != span.text {
                return Err(misaligned(format!(
                    "span text {t:?} does not match source words {:?}",
                    span.text
                )));
            }
        }
        spans.push(span);
    }
    let example = AnnotatedExample {
        id: record.id,
        text: record.text,
        spans,
        source: record.source,
    };
    if let Some(problem) = validate_example(&example).into_iter().next() {
        return Err(DatasetError::Misaligned {
            line,
            id: example.id,
            message: problem,
        });
    }
    Ok(example)
}

/// Streams examples from JSONL, skipping blank lines.
pub struct JsonlReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
        }
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<AnnotatedExample, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = match self.lines.next()? {
                Ok(raw) => raw,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if raw.trim().is_empty() {
                continue;
            }
            return Some(example_from_jsonl(&raw, self.line));
        }
    }
}

fn escape_meta(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_meta(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Writes one CoNLL document, including its trailing blank line.
pub fn write_conll_document<W: Write>(out: &mut W, example: &AnnotatedExample) -> Result<(), DatasetError> {
    let words = word_tokenize(&example.text);
    let tags = encode_tags(&example.spans, words.len()).map_err(|e| DatasetError::InvalidExample {
        id: example.id.clone(),
        message: e.to_string(),
    })?;
    writeln!(out, "# id = {}", escape_meta(&example.id))?;
    writeln!(out, "# source = {}", example.source)?;
    if join_words(&words) != example.text {
        writeln!(out, "# text = {}", escape_meta(&example.text))?;
    }
    for (w, t) in words.iter().zip(&tags.tags) {
        writeln!(out, "{}\t{}", w.text, t)?;
    }
    writeln!(out)?;
    Ok(())
}

/// Streams documents from CoNLL input.
pub struct ConllReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    docs: usize,
}

impl<R: BufRead> ConllReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            docs: 0,
        }
    }

    fn finish(
        &mut self,
        first_line: usize,
        meta: Vec<(String, String)>,
        tokens: Vec<(String, BioTag)>,
    ) -> Result<AnnotatedExample, DatasetError> {
        let mut id = None;
        let mut source = ExampleSource::default();
        let mut text = None;
        for (k, v) in meta {
            match k.as_str() {
                "id" => id = Some(v),
                "source" => {
                    source = v.parse().map_err(|message| DatasetError::Parse {
                        line: first_line,
                        message,
                    })?
                }
                "text" => text = Some(v),
                _ => {}
            }
        }
        let id = id.unwrap_or_else(|| format!("doc{}", self.docs));
        self.docs += 1;
        let text = text.unwrap_or_else(|| tokens.iter().map(|t| t.0.as_str()).collect::<Vec<_>>().join(" "));
        let words = word_tokenize(&text);
        let misaligned = |message: String| DatasetError::Misaligned {
            line: first_line,
            id: id.clone(),
            message,
        };
        if words.len() != tokens.len() || words.iter().zip(&tokens).any(|(w, t)| w.text != t.0) {
            return Err(misaligned("token lines do not match the document text".to_string()));
        }
        let tags = TagSequence::words(tokens.into_iter().map(|t| t.1).collect());
        let spans = decode_spans(&tags, &words, RepairPolicy::Strict).map_err(|e| misaligned(e.to_string()))?;
        Ok(AnnotatedExample {
            id,
            text,
            spans,
            source,
        })
    }
}

impl<R: BufRead> Iterator for ConllReader<R> {
    type Item = Result<AnnotatedExample, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut meta = Vec::new();
        let mut tokens = Vec::new();
        let mut first_line = 0;
        loop {
            let raw = match self.lines.next() {
                None => break,
                Some(Err(e)) => return Some(Err(e.into())),
                Some(Ok(raw)) => raw,
            };
            self.line += 1;
            let raw = raw.strip_suffix('\r').unwrap_or(&raw);
            if raw.trim().is_empty() {
                if meta.is_empty() && tokens.is_empty() {
                    continue;
                }
                break;
            }
            if first_line == 0 {
                first_line = self.line;
            }
            if let Some((token, tag)) = raw.split_once('\t') {
                let tag = match tag.trim_end().parse::<BioTag>() {
                    Ok(t) => t,
                    Err(e) => {
                        return Some(Err(DatasetError::Parse {
                            line: self.line,
                            message: e.to_string(),
                        }))
                    }
                };
                tokens.push((token.to_string(), tag));
            } else if let Some(rest) = raw.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(" = ") {
                    meta.push((k.trim().to_string(), unescape_meta(v)));
                }
            } else if !raw.starts_with('#') {
                return Some(Err(DatasetError::Parse {
                    line: self.line,
                    message: format!("expected `token<TAB>tag`, got {raw:?}"),
                }));
            }
        }
        if meta.is_empty() && tokens.is_empty() {
            return None;
        }
        Some(self.finish(first_line, meta, tokens))
    }
}

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Reads every example of a dataset file.
pub fn read_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Vec<AnnotatedExample>, DatasetError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(file_error(path))?);
    match format {
        DatasetFormat::Jsonl => JsonlReader::new(reader).collect(),
        DatasetFormat::Conll => ConllReader::new(reader).collect(),
    }
}

/// Iterates a dataset file without loading it whole.
pub fn stream_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<Box<dyn Iterator<Item = Result<AnnotatedExample, DatasetError>>>, DatasetError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(file_error(path))?);
    Ok(match format {
        DatasetFormat::Jsonl => Box::new(JsonlReader::new(reader)),
        DatasetFormat::Conll => Box::new(ConllReader::new(reader)),
    })
}

pub fn write_example<W: Write>(
    out: &mut W,
    example: &AnnotatedExample,
    format: DatasetFormat,
) -> Result<(), DatasetError> {
    match format {
        DatasetFormat::Jsonl => {
            writeln!(out, "{}", example_to_jsonl(example)?)?;
            Ok(())
        }
        DatasetFormat::Conll => write_conll_document(out, example),
    }
}

pub fn write_dataset_to<W: Write>(
    out: &mut W,
    examples: &[AnnotatedExample],
    format: DatasetFormat,
) -> Result<(), DatasetError> {
    for ex in examples {
        write_example(out, ex, format)?;
    }
    Ok(())
}

pub fn write_dataset(
    examples: &[AnnotatedExample],
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(file_error(path))?);
    write_dataset_to(&mut out, examples, format)?;
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// OCR

#[derive(Debug, Error)]
pub enum OcrError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid OCR JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("page {page}, word {index}: {message}")]
    InvalidWord { page: usize, index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrWord {
    pub text: String,
    /// `[x0, y0, x1, y1]` in pixels, y growing downwards.
    pub bbox: [f64; 4],
    pub page: usize,
}

impl OcrWord {
    pub fn new(text: impl Into<String>, bbox: [f64; 4], page: usize) -> Self {
        Self {
            text: text.into(),
            bbox,
            page,
        }
    }

    fn center_y(&self) -> f64 {
        (self.bbox[1] + self.bbox[3]) / 2.0
    }

    fn spans_y(&self, y: f64) -> bool {
        self.bbox[1] <= y && y <= self.bbox[3]
    }

    fn shares_line(&self, other: &OcrWord) -> bool {
        self.page == other.page && (other.spans_y(self.center_y()) || self.spans_y(other.center_y()))
    }

    fn check(&self) -> Result<(), String> {
        let [x0, y0, x1, y1] = self.bbox;
        if self.text.is_empty() {
            return Err("text is empty".into());
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(format!("bbox {:?} must satisfy x0 < x1 and y0 < y1", self.bbox));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OcrJsonWord {
    text: String,
    bbox: [f64; 4],
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct OcrJsonPage {
    #[serde(default)]
    words: Vec<OcrJsonWord>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct OcrJsonDocument {
    #[serde(default)]
    pages: Vec<OcrJsonPage>,
}

/// Parses `{"pages":[{"words":[{"text":..,"bbox":[x0,y0,x1,y1]}]}]}`.
pub fn parse_ocr_json(json: &str) -> Result<Vec<OcrWord>, OcrError> {
    let doc: OcrJsonDocument = serde_json::from_str(json)?;
    let mut words = Vec::new();
    for (page, p) in doc.pages.into_iter().enumerate() {
        for (index, w) in p.words.into_iter().enumerate() {
            let word = OcrWord::new(w.text, w.bbox, page);
            word.check()
                .map_err(|message| OcrError::InvalidWord { page, index, message })?;
            words.push(word);
        }
    }
    Ok(words)
}

pub fn read_ocr_json(path: impl AsRef<Path>) -> Result<Vec<OcrWord>, OcrError> {
    parse_ocr_json(&std::fs::read_to_string(path)?)
}

pub fn ocr_words_to_json(words: &[OcrWord]) -> String {
    let n_pages = words.iter().map(|w| w.page + 1).max().unwrap_or(0);
    let mut doc = OcrJsonDocument {
        pages: (0..n_pages).map(|_| OcrJsonPage::default()).collect(),
    };
    for w in words {
        doc.pages[w.page].words.push(OcrJsonWord {
            text: w.text.clone(),
            bbox: w.bbox,
        });
    }
    serde_json::to_string(&doc).expect("OCR document serializes")
}

/// Linearized OCR text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcrText {
    pub text: String,
    /// Byte range of each input word in `text`, indexed like the input.
    pub provenance: Vec<Range<usize>>,
}

fn find_root(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Rebuilds reading order from OCR words.
///
/// Two words are on the same line when the vertical center of one lies
/// within the other's vertical extent; lines are the connected groups of
/// that relation. Lines are ordered by page and then top edge, words within
/// a line by left edge. Multi-column layouts interleave.
pub fn ocr_to_text(words: &[OcrWord]) -> OcrText {
    let n = words.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if words[i].shares_line(&words[j]) {
                let (a, b) = (find_root(&mut parent, i), find_root(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut lines: Vec<Vec<usize>> = Vec::new();
    let mut line_of_root = vec![usize::MAX; n];
    for i in 0..n {
        let r = find_root(&mut parent, i);
        if line_of_root[r] == usize::MAX {
            line_of_root[r] = lines.len();
            lines.push(Vec::new());
        }
        lines[line_of_root[r]].push(i);
    }
    for line in &mut lines {
        line.sort_by(|&a, &b| {
            let (wa, wb) = (&words[a], &words[b]);
            wa.bbox[0]
                .total_cmp(&wb.bbox[0])
                .then(wa.bbox[1].total_cmp(&wb.bbox[1]))
                .then(a.cmp(&b))
        });
    }
    let top = |line: &[usize]| {
        let page = words[line[0]].page;
        let y0 = line.iter().map(|&i| words[i].bbox[1]).fold(f64::INFINITY, f64::min);
        let x0 = words[line[0]].bbox[0];
        (page, y0, x0)
    };
    lines.sort_by(|a, b| {
        let (pa, ya, xa) = top(a);
        let (pb, yb, xb) = top(b);
        pa.cmp(&pb).then(ya.total_cmp(&yb)).then(xa.total_cmp(&xb))
    });

    let mut text = String::new();
    let mut provenance = vec![0..0; n];
    for (li, line) in lines.iter().enumerate() {
        if li > 0 {
            text.push('\n');
        }
        for (wi, &i) in line.iter().enumerate() {
            if wi > 0 {
                text.push(' ');
            }
            let start = text.len();
            text.push_str(&words[i].text);
            provenance[i] = start..text.len();
        }
    }
    OcrText { text, provenance }
}
