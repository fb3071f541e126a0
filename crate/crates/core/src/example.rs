use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Span;
use crate::ontology::RegistryError;

#[derive(Debug, thiserror::Error)]
pub enum ExampleError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("no {role} argument available to fill template {template:?}")]
    MissingSlotArgument { role: String, template: String },
    #[error("question {0:?} does not end with '?'")]
    MalformedQuestion(String),
    #[error("question {0:?} already carries a trigger clause")]
    TriggerClauseAttached(String),
    #[error("mention index {index} out of range for record {id}")]
    NoSuchMention { id: String, index: usize },
}

/// Where an example came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub event_type: String,
    pub trigger: Span,
    /// Index of the mention within its record.
    pub mention: usize,
}

/// One serialized seq2seq input/output pair.
///
/// `output` is `Some("")` for a training example whose role has no
/// arguments and `None` for an inference example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqExample {
    pub id: String,
    pub role: String,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub meta: ExampleMeta,
}

pub fn write_examples<W: Write>(mut writer: W, examples: &[Seq2SeqExample]) -> std::io::Result<()> {
    for example in examples {
        serde_json::to_writer(&mut writer, example)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads examples from JSONL, skipping blank lines.
pub fn read_examples<R: BufRead>(reader: R) -> Result<Vec<Seq2SeqExample>, crate::JsonlError> {
    crate::read_jsonl(reader)
}
