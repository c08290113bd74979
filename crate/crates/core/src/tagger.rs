//! One tagging interface over the rule baseline, a remote model server and
//! a table of stored tags.
//!
//! The remote protocol is a JSON POST to `<endpoint>/v1/tag`:
//!
//! ```text
//! request:  {"id":"<string>","tokens":["<t1>",...]}
//! response: {"id":"<string>","tags":["O","B-Question",...]}
//! error:    non-2xx status with {"error":"<message>"}
//! ```
//!
//! Tokens are subword pieces; the response must echo the id and carry one
//! tag per token.

use std::collections::HashMap;
use std::io::BufRead;
use std::ops::Range;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{collapse_tags, decode_spans, encode_tags, LabelError, RepairPolicy};
use crate::rules::{rule_extract_words, RuleSet};
use crate::tokenize::{tokenize_words, word_tokenize, Vocabulary};
use crate::types::{AnnotatedExample, BioTag, QuestionSpan, TagSequence, Token};

pub const DEFAULT_MAX_LEN: usize = 512;
pub const DEFAULT_STRIDE: usize = 128;
pub const DEFAULT_PARALLEL: usize = 4;

#[derive(Debug, Error)]
pub enum TagError {
    #[error("{endpoint}: request {id:?}: transport error: {message}")]
    Transport {
        endpoint: String,
        id: String,
        message: String,
    },
    #[error("{endpoint}: request {id:?}: timed out")]
    Timeout { endpoint: String, id: String },
    #[error("{endpoint}: request {id:?}: malformed response: {reason}")]
    MalformedResponse {
        endpoint: String,
        id: String,
        reason: String,
    },
    #[error("{endpoint}: request {id:?}: server returned {status}: {message}")]
    Server {
        endpoint: String,
        id: String,
        status: u16,
        message: String,
    },
    #[error("oracle has no tags for document {0:?}")]
    UnknownDocument(String),
    #[error("oracle tags for {id:?} have length {found}, document has {expected} words")]
    OracleLength { id: String, expected: usize, found: usize },
    #[error("invalid tagger configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Wire request body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRequest {
    pub id: String,
    pub tokens: Vec<String>,
}

/// Wire response body; tags stay strings until validated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagResponse {
    pub id: String,
    pub tags: Vec<String>,
}

/// Body of a non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl TagResponse {
    /// Checks the response against its request and parses the tags.
    pub fn validate(&self, request: &TagRequest) -> Result<Vec<BioTag>, String> {
        if self.id != request.id {
            return Err(format!("id {:?} does not echo request id {:?}", self.id, request.id));
        }
        if self.tags.len() != request.tokens.len() {
            return Err(format!("{} tags for {} tokens", self.tags.len(), request.tokens.len()));
        }
        self.tags
            .iter()
            .enumerate()
            .map(|(i, t)| t.parse::<BioTag>().map_err(|e| format!("tag {i}: {e}")))
            .collect()
    }
}

/// Overlapping windows of at most `max_len` positions, starting every `stride`.
///
/// Panics unless `0 < stride < max_len`.
pub fn chunk_long_input(n: usize, max_len: usize, stride: usize) -> Vec<Range<usize>> {
    assert!(0 < stride && stride < max_len, "need 0 < stride < max_len");
    let mut windows = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + max_len).min(n);
        windows.push(start..end);
        if end == n {
            break;
        }
        start += stride;
    }
    windows
}

/// Merges per-window predictions.
///
/// Each position takes its tag from the window where it is farthest from an
/// edge, `min(p - start, end - p)`; ties go to the earlier window.
pub fn merge_windows(windows: &[Range<usize>], predicted: &[Vec<BioTag>], n: usize) -> TagSequence {
    let mut tags = Vec::with_capacity(n);
    for p in 0..n {
        let mut best: Option<(usize, usize)> = None; // (distance, window)
        for (w, r) in windows.iter().enumerate() {
            if r.contains(&p) {
                let d = (p - r.start).min(r.end - p);
                if best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, w));
                }
            }
        }
        let (_, w) = best.expect("windows cover every position");
        tags.push(predicted[w][p - windows[w].start]);
    }
    TagSequence::subtokens(tags)
}

/// Client for a model server speaking the `/v1/tag` protocol.
#[derive(Debug, Clone)]
pub struct RemoteTagger {
    endpoint: String,
    url: String,
    timeout: Duration,
    vocab: Vocabulary,
    max_len: usize,
    stride: usize,
    parallel: usize,
    agent: ureq::Agent,
}

impl RemoteTagger {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, vocab: Vocabulary) -> Result<Self, TagError> {
        let endpoint = endpoint.into();
        if timeout.is_zero() {
            return Err(TagError::Config("remote timeout must be positive".into()));
        }
        let trimmed = endpoint.trim_end_matches('/');
        let url = if trimmed.ends_with("/v1/tag") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/v1/tag")
        };
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Ok(Self {
            endpoint,
            url,
            timeout,
            vocab,
            max_len: DEFAULT_MAX_LEN,
            stride: DEFAULT_STRIDE,
            parallel: DEFAULT_PARALLEL,
            agent,
        })
    }

    pub fn with_window(mut self, max_len: usize, stride: usize) -> Result<Self, TagError> {
        if !(0 < stride && stride < max_len) {
            return Err(TagError::Config(format!(
                "window needs 0 < stride < max_len, got stride {stride}, max_len {max_len}"
            )));
        }
        self.max_len = max_len;
        self.stride = stride;
        Ok(self)
    }

    /// Maximum number of in-flight requests per document.
    pub fn with_parallel(mut self, parallel: usize) -> Self {
        self.parallel = parallel.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn parallel(&self) -> usize {
        self.parallel
    }

    /// Sends one request; retries once on transport failure.
    pub fn send(&self, request: &TagRequest) -> Result<Vec<BioTag>, TagError> {
        match self.send_once(request) {
            Err(TagError::Transport { .. } | TagError::Timeout { .. }) => self.send_once(request),
            other => other,
        }
    }

    fn send_once(&self, request: &TagRequest) -> Result<Vec<BioTag>, TagError> {
        let body = serde_json::to_string(request).expect("request serializes");
        let malformed = |reason: String| TagError::MalformedResponse {
            endpoint: self.endpoint.clone(),
            id: request.id.clone(),
            reason,
        };
        let response = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&body);
        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let text = r.into_string().unwrap_or_default();
                let message = serde_json::from_str::<ErrorBody>(&text)
                    .map(|b| b.error)
                    .unwrap_or(text);
                return Err(TagError::Server {
                    endpoint: self.endpoint.clone(),
                    id: request.id.clone(),
                    status,
                    message,
                });
            }
            Err(ureq::Error::Transport(t)) => return Err(self.transport_error(request, t)),
        };
        let text = response.into_string().map_err(|e| {
            if is_timeout(&e) {
                TagError::Timeout {
                    endpoint: self.endpoint.clone(),
                    id: request.id.clone(),
                }
            } else {
                TagError::Transport {
                    endpoint: self.endpoint.clone(),
                    id: request.id.clone(),
                    message: e.to_string(),
                }
            }
        })?;
        let parsed: TagResponse = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
        parsed.validate(request).map_err(malformed)
    }

    fn transport_error(&self, request: &TagRequest, t: ureq::Transport) -> TagError {
        let timed_out = std::error::Error::source(&t)
            .and_then(|s| s.downcast_ref::<std::io::Error>())
            .is_some_and(is_timeout);
        if timed_out {
            TagError::Timeout {
                endpoint: self.endpoint.clone(),
                id: request.id.clone(),
            }
        } else {
            TagError::Transport {
                endpoint: self.endpoint.clone(),
                id: request.id.clone(),
                message: t.to_string(),
            }
        }
    }

    /// Subtoken tags for `words`, windowed and merged, collapsed back to words.
    pub fn tag_words(&self, doc_id: &str, words: &[Token]) -> Result<TagSequence, TagError> {
        let tok = tokenize_words(words.to_vec(), &self.vocab);
        let n = tok.pieces.len();
        if n == 0 {
            return Ok(TagSequence::words(Vec::new()));
        }
        let windows = chunk_long_input(n, self.max_len, self.stride);
        let requests: Vec<TagRequest> = windows
            .iter()
            .enumerate()
            .map(|(k, r)| TagRequest {
                id: if windows.len() == 1 {
                    doc_id.to_string()
                } else {
                    format!("{doc_id}#w{k}")
                },
                tokens: tok.pieces[r.clone()].to_vec(),
            })
            .collect();
        let predicted = parallel_map(&requests, self.parallel, |r| self.send(r))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let merged = merge_windows(&windows, &predicted, n);
        Ok(collapse_tags(&merged, &tok.alignment)?)
    }
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock)
}

/// Stored word-level tags keyed by document id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleTable {
    tags: HashMap<String, TagSequence>,
}

impl OracleTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, tags: TagSequence) {
        self.tags.insert(id.into(), tags);
    }

    pub fn get(&self, id: &str) -> Option<&TagSequence> {
        self.tags.get(id)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Gold tags of annotated examples.
    pub fn from_examples(examples: &[AnnotatedExample]) -> Result<Self, LabelError> {
        let mut table = Self::new();
        for ex in examples {
            let n = word_tokenize(&ex.text).len();
            table.insert(ex.id.clone(), encode_tags(&ex.spans, n)?);
        }
        Ok(table)
    }

    /// Reads JSONL lines of `{"id":..,"tags":[..]}` with word-level tags.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, String> {
        let mut table = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TagResponse = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            let tags = record
                .tags
                .iter()
                .map(|t| t.parse::<BioTag>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            table.insert(record.id, TagSequence::words(tags));
        }
        Ok(table)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// JSONL lines, sorted by id.
    pub fn to_jsonl(&self) -> String {
        let mut ids: Vec<&String> = self.tags.keys().collect();
        ids.sort();
        let mut out = String::new();
        for id in ids {
            let record = TagResponse {
                id: id.clone(),
                tags: self.tags[id].tags.iter().map(|t| t.to_string()).collect(),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// The interchangeable extractors.
#[derive(Debug, Clone)]
pub enum TaggerKind {
    Rule(RuleSet),
    Remote(RemoteTagger),
    Oracle(OracleTable),
}

impl TaggerKind {
    /// Word-level tags for one document; `words` must come from `text`.
    pub fn tag(&self, doc_id: &str, text: &str, words: &[Token]) -> Result<TagSequence, TagError> {
        let tags = match self {
            TaggerKind::Rule(rules) => encode_tags(&rule_extract_words(text, words, rules), words.len())?,
            TaggerKind::Remote(remote) => remote.tag_words(doc_id, words)?,
            TaggerKind::Oracle(table) => {
                let tags = table
                    .get(doc_id)
                    .ok_or_else(|| TagError::UnknownDocument(doc_id.to_string()))?;
                if tags.len() != words.len() {
                    return Err(TagError::OracleLength {
                        id: doc_id.to_string(),
                        expected: words.len(),
                        found: tags.len(),
                    });
                }
                tags.clone()
            }
        };
        debug_assert_eq!(tags.len(), words.len());
        Ok(tags)
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaggerKind::Rule(_) => "Rule Based Approach",
            TaggerKind::Remote(_) => "Remote Model",
            TaggerKind::Oracle(_) => "Oracle",
        }
    }
}

/// Tokenize, tag, decode: text in, question spans out.
pub fn extract(
    kind: &TaggerKind,
    doc_id: &str,
    text: &str,
    policy: RepairPolicy,
) -> Result<Vec<QuestionSpan>, TagError> {
    let words = word_tokenize(text);
    if words.is_empty() {
        return Ok(Vec::new());
    }
    let tags = kind.tag(doc_id, text, &words)?;
    Ok(decode_spans(&tags, &words, policy)?)
}

/// Applies `f` to every item with at most `workers` threads, keeping order.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}
