//! Sentence-level event corpora in JSONL form.
//!
//! One record per line:
//!
//! ```json
//! {"id": "s1", "text": "...", "mentions": [
//!   {"event_type": "Conflict.Attack", "trigger": {"start": 38, "end": 46},
//!    "arguments": [{"start": 15, "end": 24, "role": "Attacker"}]}]}
//! ```
//!
//! Offsets count Unicode scalar values (Rust `char`s), start inclusive, end
//! exclusive, relative to the sentence. Triggers and arguments may carry an
//! optional `"surface"`, which must then equal the text slice.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

/// Small synthetic corpus in this schema covering every event type.
pub const FIXTURE_CORPUS_JSONL: &str = include_str!("../data/fixture_corpus.jsonl");

pub fn fixture_corpus() -> Vec<SentenceRecord> {
    read_corpus(FIXTURE_CORPUS_JSONL.as_bytes()).expect("bundled fixture is valid")
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("record {id}: {reason}")]
    Invalid { id: String, reason: String },
}

/// A half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Slices `text` by character offsets. `None` if the range is out of bounds or inverted.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let begin = byte_offset(text, start)?;
    let finish = byte_offset(text, end)?;
    Some(&text[begin..finish])
}

/// Byte position of the `char_index`-th character; `text.len()` for the end position.
pub fn byte_offset(text: &str, char_index: usize) -> Option<usize> {
    if char_index == 0 {
        return Some(0);
    }
    match text.char_indices().nth(char_index) {
        Some((b, _)) => Some(b),
        None if text.chars().count() == char_index => Some(text.len()),
        None => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArgumentSpan {
    pub start: usize,
    pub end: usize,
    pub role: String,
    pub surface: String,
}

impl ArgumentSpan {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventMention {
    pub event_type: String,
    pub trigger: Span,
    pub trigger_surface: String,
    /// Sorted by start offset (stable).
    pub arguments: Vec<ArgumentSpan>,
}

impl EventMention {
    /// Arguments playing `role`, in reading order.
    pub fn arguments_for<'a>(&'a self, role: &'a str) -> impl Iterator<Item = &'a ArgumentSpan> + 'a {
        self.arguments.iter().filter(move |a| a.role == role)
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.arguments.iter().any(|a| a.role == role)
    }

    /// The earliest argument for `role`.
    pub fn first_argument(&self, role: &str) -> Option<&ArgumentSpan> {
        self.arguments.iter().find(|a| a.role == role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub mentions: Vec<EventMention>,
}

// Wire types. Kept separate so that every domain value is validated.

#[derive(Debug, Serialize, Deserialize)]
struct RawSpan {
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surface: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawArgument {
    start: usize,
    end: usize,
    role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surface: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawMention {
    event_type: String,
    trigger: RawSpan,
    #[serde(default)]
    arguments: Vec<RawArgument>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    mentions: Vec<RawMention>,
}

fn checked_slice<'t>(
    id: &str,
    text: &'t str,
    what: &str,
    start: usize,
    end: usize,
    surface: Option<&str>,
) -> Result<&'t str, CorpusError> {
    let invalid = |reason: String| CorpusError::Invalid {
        id: id.to_string(),
        reason,
    };
    if start >= end {
        return Err(invalid(format!("{what} span [{start}, {end}) is empty or inverted")));
    }
    let slice = char_slice(text, start, end)
        .ok_or_else(|| invalid(format!("{what} span [{start}, {end}) exceeds text length")))?;
    if let Some(surface) = surface {
        if surface != slice {
            return Err(invalid(format!(
                "{what} surface {surface:?} does not match text slice {slice:?} at [{start}, {end})"
            )));
        }
    }
    Ok(slice)
}

impl SentenceRecord {
    fn from_raw(raw: RawRecord) -> Result<Self, CorpusError> {
        let RawRecord { id, text, mentions } = raw;
        let mut out = Vec::with_capacity(mentions.len());
        for mention in mentions {
            let t = &mention.trigger;
            let trigger_surface =
                checked_slice(&id, &text, "trigger", t.start, t.end, t.surface.as_deref())?
                    .to_string();
            let mut arguments = Vec::with_capacity(mention.arguments.len());
            for arg in mention.arguments {
                let what = format!("{} argument", arg.role);
                let surface =
                    checked_slice(&id, &text, &what, arg.start, arg.end, arg.surface.as_deref())?;
                arguments.push(ArgumentSpan {
                    start: arg.start,
                    end: arg.end,
                    surface: surface.to_string(),
                    role: arg.role,
                });
            }
            arguments.sort_by_key(|a| a.start);
            out.push(EventMention {
                event_type: mention.event_type,
                trigger: Span::new(t.start, t.end),
                trigger_surface,
                arguments,
            });
        }
        Ok(Self {
            id,
            text,
            mentions: out,
        })
    }

    fn to_raw(&self) -> RawRecord {
        RawRecord {
            id: self.id.clone(),
            text: self.text.clone(),
            mentions: self
                .mentions
                .iter()
                .map(|m| RawMention {
                    event_type: m.event_type.clone(),
                    trigger: RawSpan {
                        start: m.trigger.start,
                        end: m.trigger.end,
                        surface: Some(m.trigger_surface.clone()),
                    },
                    arguments: m
                        .arguments
                        .iter()
                        .map(|a| RawArgument {
                            start: a.start,
                            end: a.end,
                            role: a.role.clone(),
                            surface: Some(a.surface.clone()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Parses and validates one JSON record.
    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        let raw: RawRecord =
            serde_json::from_str(json).map_err(|source| CorpusError::Malformed { line: 1, source })?;
        Self::from_raw(raw)
    }

    /// Canonical single-line JSON form (arguments sorted, surfaces included).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("record serializes")
    }
}

/// Reads JSONL records from any buffered reader. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<SentenceRecord>, CorpusError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Malformed { line: i + 1, source })?;
        records.push(SentenceRecord::from_raw(raw)?);
    }
    Ok(records)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<SentenceRecord>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(BufReader::new(file))
}

pub fn write_corpus<W: Write>(mut writer: W, records: &[SentenceRecord]) -> std::io::Result<()> {
    for record in records {
        writeln!(writer, "{}", record.to_json())?;
    }
    Ok(())
}

/// Inserts `"* "` before and `" *"` after the trigger.
///
/// Panics if `trigger` is not a valid character range of `text`.
pub fn mark_trigger(text: &str, trigger: Span) -> String {
    let begin = byte_offset(text, trigger.start).expect("trigger start within text");
    let finish = byte_offset(text, trigger.end).expect("trigger end within text");
    let mut out = String::with_capacity(text.len() + 4);
    out.push_str(&text[..begin]);
    out.push_str("* ");
    out.push_str(&text[begin..finish]);
    out.push_str(" *");
    out.push_str(&text[finish..]);
    out
}
