//! The `qx` command line.
//!
//! Exit codes: 0 on success, 1 on a runtime error, 2 on a usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use tempfile::NamedTempFile;

use crate::augment::{augment, AugmentConfig, NoisePool};
use crate::eval::{evaluate, render_table, MatchCriterion};
use crate::io::{ocr_to_text, read_dataset, read_ocr_json, stream_dataset, write_example, DatasetFormat};
use crate::labels::RepairPolicy;
use crate::rules::RuleSet;
use crate::tagger::{extract, parallel_map, OracleTable, RemoteTagger, TaggerKind, DEFAULT_MAX_LEN, DEFAULT_STRIDE};
use crate::tokenize::{tokenize_full, Vocabulary};
use crate::types::{AnnotatedExample, ExampleSource, QuestionSpan};

#[derive(Debug, Parser)]
#[command(
    name = "qx",
    version,
    about = "Extract question spans from student queries and OCR text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract questions from a text, JSONL or OCR JSON input.
    Extract(ExtractArgs),
    /// Expand a base dataset with noise and borrowed questions.
    Augment(AugmentArgs),
    /// Score predicted questions against gold.
    Eval(EvalArgs),
    /// Convert a dataset between JSONL and CoNLL.
    Convert(ConvertArgs),
    /// Show word and subword tokens for a text file.
    Tokenize(TokenizeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Conll,
}

impl From<Format> for DatasetFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Jsonl => DatasetFormat::Jsonl,
            Format::Conll => DatasetFormat::Conll,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Strict,
    Repair,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Plain text file (one document) or JSONL with `id` and `text` fields.
    #[arg(long, conflicts_with = "ocr", required_unless_present = "ocr")]
    input: Option<PathBuf>,
    /// OCR JSON file (one document).
    #[arg(long)]
    ocr: Option<PathBuf>,
    /// rule[:<ruleset file>], remote:<url> or oracle:<tags jsonl>.
    #[arg(long)]
    tagger: String,
    #[arg(long, value_enum, default_value = "repair")]
    policy: Policy,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
    /// Vocabulary file for the remote tagger.
    #[arg(long, env = "QX_VOCAB")]
    vocab: Option<PathBuf>,
    /// Concurrent remote requests.
    #[arg(long, default_value_t = 4)]
    parallel: usize,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
    #[arg(long)]
    lowercase: bool,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    base: PathBuf,
    /// One question-free snippet per line.
    #[arg(long)]
    noise: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
    #[arg(long, default_value_t = 0.5)]
    p_prepend: f64,
    #[arg(long, default_value_t = 0.5)]
    p_append: f64,
    #[arg(long, default_value_t = 0.3)]
    p_insert: f64,
    #[arg(long, default_value_t = 2)]
    max_inserted: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// exact, text or iou:<threshold>.
    #[arg(long = "match", default_value = "text", value_parser = parse_criterion)]
    criterion: MatchCriterion,
    /// Row label in the report table.
    #[arg(long, default_value = "Model")]
    name: String,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
}

fn parse_criterion(s: &str) -> std::result::Result<MatchCriterion, String> {
    s.parse().map_err(|e: crate::eval::EvalError| e.to_string())
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    from: Format,
    #[arg(long, value_enum)]
    to: Format,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TokenizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, env = "QX_VOCAB")]
    vocab: PathBuf,
    #[arg(long)]
    lowercase: bool,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract(a) => cmd_extract(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Tokenize(a) => cmd_tokenize(a),
    }
}

/// Output file written beside its destination and moved into place on
/// success, so a failed run leaves nothing behind.
struct AtomicOut {
    tmp: BufWriter<NamedTempFile>,
    dest: PathBuf,
}

impl AtomicOut {
    fn create(dest: &Path) -> Result<Self> {
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
        Ok(Self {
            tmp: BufWriter::new(tmp),
            dest: dest.to_path_buf(),
        })
    }

    fn writer(&mut self) -> &mut impl Write {
        &mut self.tmp
    }

    fn commit(self) -> Result<()> {
        let tmp = self
            .tmp
            .into_inner()
            .map_err(|e| anyhow!("flush failed: {}", e.error()))?;
        tmp.persist(&self.dest)
            .with_context(|| format!("cannot write {}", self.dest.display()))?;
        Ok(())
    }
}

/// File name up to its first dot: `row1.ocr.json` -> `row1`.
fn doc_id_from_path(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy())
        .and_then(|s| s.split('.').next().filter(|s| !s.is_empty()).map(str::to_string))
        .unwrap_or_else(|| "doc".to_string())
}

#[derive(Deserialize)]
struct InputRecord {
    id: String,
    text: String,
}

struct Document {
    id: String,
    text: String,
    source: ExampleSource,
}

/// JSONL input holds many documents; text and OCR input hold one.
fn is_multi_document(args: &ExtractArgs) -> bool {
    args.ocr.is_none()
        && args
            .input
            .as_ref()
            .is_some_and(|p| p.extension().is_some_and(|e| e == "jsonl"))
}

fn input_documents(args: &ExtractArgs) -> Result<Box<dyn Iterator<Item = Result<Document>>>> {
    if let Some(ocr) = &args.ocr {
        let words = read_ocr_json(ocr).with_context(|| format!("reading {}", ocr.display()))?;
        let doc = Document {
            id: doc_id_from_path(ocr),
            text: ocr_to_text(&words).text,
            source: ExampleSource::Ocr,
        };
        return Ok(Box::new(std::iter::once(Ok(doc))));
    }
    let path = args.input.as_ref().expect("clap requires --input or --ocr");
    if !is_multi_document(args) {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if text.trim().is_empty() {
            return Ok(Box::new(std::iter::empty()));
        }
        let doc = Document {
            id: doc_id_from_path(path),
            text,
            source: ExampleSource::Manual,
        };
        return Ok(Box::new(std::iter::once(Ok(doc))));
    }
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let iter = BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line?;
            let r: InputRecord = serde_json::from_str(&line).with_context(|| format!("input line {}", i + 1))?;
            Ok(Document {
                id: r.id,
                text: r.text,
                source: ExampleSource::Manual,
            })
        });
    Ok(Box::new(iter))
}

fn build_tagger(args: &ExtractArgs) -> Result<TaggerKind> {
    let (kind, value) = match args.tagger.split_once(':') {
        Some((k, v)) => (k, Some(v)),
        None => (args.tagger.as_str(), None),
    };
    match (kind, value) {
        ("rule", None | Some("default")) => Ok(TaggerKind::Rule(RuleSet::default_rules())),
        ("rule", Some(path)) => Ok(TaggerKind::Rule(
            RuleSet::load(path).with_context(|| format!("loading ruleset {path}"))?,
        )),
        ("oracle", Some(path)) => Ok(TaggerKind::Oracle(
            OracleTable::from_file(path).map_err(|e| anyhow!("loading oracle tags: {e}"))?,
        )),
        ("remote", Some(url)) => {
            let vocab_path = args
                .vocab
                .as_ref()
                .ok_or_else(|| usage("remote tagger needs --vocab or QX_VOCAB"))?;
            if args.timeout_ms == 0 {
                return Err(usage("--timeout-ms must be positive"));
            }
            if !(0 < args.stride && args.stride < args.max_len) {
                return Err(usage("need 0 < --stride < --max-len"));
            }
            let vocab = Vocabulary::from_file(vocab_path)?.lowercased(args.lowercase);
            let remote = RemoteTagger::new(url, Duration::from_millis(args.timeout_ms), vocab)?
                .with_window(args.max_len, args.stride)?
                // The request budget goes to documents or to one document's windows, not both.
                .with_parallel(if is_multi_document(args) { 1 } else { args.parallel });
            Ok(TaggerKind::Remote(remote))
        }
        _ => Err(usage(format!(
            "invalid --tagger {:?}: expected rule[:<file>], remote:<url> or oracle:<file>",
            args.tagger
        ))),
    }
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    if args.parallel == 0 {
        return Err(usage("--parallel must be at least 1"));
    }
    let tagger = build_tagger(&args)?;
    let policy = match args.policy {
        Policy::Strict => RepairPolicy::Strict,
        Policy::Repair => RepairPolicy::Iob2Repair,
    };
    let format: DatasetFormat = args.format.into();
    let docs = input_documents(&args)?;
    let mut out = AtomicOut::create(&args.out)?;
    let workers = match tagger {
        TaggerKind::Remote(_) if is_multi_document(&args) => args.parallel,
        _ => 1,
    };
    let batch_size = workers * 16;
    let mut batch: Vec<Document> = Vec::with_capacity(batch_size);
    let mut docs = docs.peekable();
    while docs.peek().is_some() {
        batch.clear();
        for doc in docs.by_ref().take(batch_size) {
            batch.push(doc?);
        }
        let results = parallel_map(&batch, workers, |d| extract(&tagger, &d.id, &d.text, policy));
        for (doc, spans) in batch.iter().zip(results) {
            let spans: Vec<QuestionSpan> = spans.with_context(|| format!("document {:?}", doc.id))?;
            let example = AnnotatedExample::new(doc.id.clone(), doc.text.clone(), spans, doc.source);
            write_example(out.writer(), &example, format)?;
        }
    }
    out.commit()
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let cfg = AugmentConfig {
        target_count: args.count,
        p_prepend_noise: args.p_prepend,
        p_append_noise: args.p_append,
        p_insert_question: args.p_insert,
        max_inserted_questions: args.max_inserted,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let base =
        read_dataset(&args.base, DatasetFormat::Jsonl).with_context(|| format!("reading {}", args.base.display()))?;
    let noise = NoisePool::from_file(&args.noise)?;
    let examples = augment(&base, &noise, &cfg)?;
    let mut out = AtomicOut::create(&args.out)?;
    let format = args.format.into();
    for ex in &examples {
        write_example(out.writer(), ex, format)?;
    }
    out.commit()
}

fn spans_by_id(path: &Path, format: DatasetFormat) -> Result<BTreeMap<String, Vec<QuestionSpan>>> {
    let mut map = BTreeMap::new();
    for ex in stream_dataset(path, format)? {
        let ex = ex.with_context(|| format!("reading {}", path.display()))?;
        if map.insert(ex.id.clone(), ex.spans).is_some() {
            bail!("{}: duplicate document id {:?}", path.display(), ex.id);
        }
    }
    Ok(map)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let format = args.format.into();
    let gold = spans_by_id(&args.gold, format)?;
    let pred = spans_by_id(&args.pred, format)?;
    let report = evaluate(&pred, &gold, args.criterion)?;
    print!("{}", render_table(&[(args.name.as_str(), &report)]));
    if let Some(path) = &args.out {
        let mut out = AtomicOut::create(path)?;
        serde_json::to_writer_pretty(out.writer(), &report)?;
        writeln!(out.writer())?;
        out.commit()?;
    }
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<()> {
    let mut out = AtomicOut::create(&args.out)?;
    let to = args.to.into();
    for ex in stream_dataset(&args.input, args.from.into())? {
        let ex = ex.with_context(|| format!("reading {}", args.input.display()))?;
        write_example(out.writer(), &ex, to)?;
    }
    out.commit()
}

fn cmd_tokenize(args: TokenizeArgs) -> Result<()> {
    let vocab = Vocabulary::from_file(&args.vocab)?.lowercased(args.lowercase);
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let t = tokenize_full(&text, &vocab);
    let alignment: Vec<[usize; 2]> = t.alignment.word_to_subtokens.iter().map(|r| [r.start, r.end]).collect();
    let words: Vec<&str> = t.words.iter().map(|w| w.text.as_str()).collect();
    let json = serde_json::json!({
        "words": words,
        "pieces": t.pieces,
        "alignment": alignment,
    });
    println!("{json}");
    Ok(())
}
