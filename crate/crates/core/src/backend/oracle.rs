use std::io::{BufRead, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, GenerationRequest, ModelKind};
use crate::corpus::SentenceRecord;
use crate::ontology::TemplateRegistry;
use crate::pipeline::enumerate_tasks;
use crate::qa_data::{qa_input, serialize_answer};
use crate::question_gen::{qg_input, select_gold_question};

/// One line of an oracle book file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub model: ModelKind,
    pub input: String,
    pub output: String,
}

/// Canned outputs keyed by `(model, exact input string)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleBook {
    entries: IndexMap<(ModelKind, String), String>,
}

impl OracleBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry. Re-adding the same output is a no-op; a different output
    /// for an existing key is an error.
    pub fn add(&mut self, model: ModelKind, input: String, output: String) -> Result<(), BackendError> {
        match self.entries.get(&(model, input.clone())) {
            Some(existing) if *existing != output => Err(BackendError::OracleBook(format!(
                "conflicting {model} outputs for input {input:?}: {existing:?} vs {output:?}"
            ))),
            Some(_) => Ok(()),
            None => {
                self.entries.insert((model, input), output);
                Ok(())
            }
        }
    }

    /// Sets an entry, replacing any existing output.
    pub fn set(&mut self, model: ModelKind, input: impl Into<String>, output: impl Into<String>) {
        self.entries.insert((model, input.into()), output.into());
    }

    pub fn get(&self, model: ModelKind, input: &str) -> Option<&str> {
        self.entries
            .get(&(model, input.to_string()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = OracleEntry> + '_ {
        self.entries.iter().map(|((model, input), output)| OracleEntry {
            model: *model,
            input: input.clone(),
            output: output.clone(),
        })
    }

    /// Book that answers every task of `corpus` with its gold question and gold answer.
    ///
    /// QA answers end with `eos_token` (`"</s>"` alone for an empty answer).
    pub fn from_gold(
        registry: &TemplateRegistry,
        corpus: &[SentenceRecord],
        eos_token: &str,
    ) -> Result<Self, BackendError> {
        let mut book = Self::new();
        let plan = enumerate_tasks(registry, corpus);
        for task in &plan.tasks {
            let record = &corpus[task.record];
            let mention = &record.mentions[task.mention];
            let question = select_gold_question(registry, mention, &task.role)
                .map_err(|e| BackendError::OracleBook(e.to_string()))?;
            book.add(
                ModelKind::Qg,
                qg_input(&record.text, mention, &task.role),
                question.text.clone(),
            )?;
            let input = qa_input(&question.text, &mention.trigger_surface, &record.text)
                .map_err(|e| BackendError::OracleBook(e.to_string()))?;
            let answer = serialize_answer(mention.arguments_for(&task.role));
            book.add(ModelKind::Qa, input, with_eos(&answer, eos_token))?;
        }
        Ok(book)
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, BackendError> {
        let mut book = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| BackendError::OracleBook(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: OracleEntry = serde_json::from_str(&line)
                .map_err(|e| BackendError::OracleBook(format!("line {}: {e}", i + 1)))?;
            book.add(entry.model, entry.input, entry.output)?;
        }
        Ok(book)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| BackendError::OracleBook(format!("{}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for entry in self.entries() {
            serde_json::to_writer(&mut writer, &entry)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn with_eos(answer: &str, eos_token: &str) -> String {
    match (answer.is_empty(), eos_token.is_empty()) {
        (_, true) => answer.to_string(),
        (true, false) => eos_token.to_string(),
        (false, false) => format!("{answer} {eos_token}"),
    }
}

/// Deterministic backend answering from an [`OracleBook`].
#[derive(Debug, Clone)]
pub struct OracleBackend {
    book: OracleBook,
}

impl OracleBackend {
    pub fn new(book: OracleBook) -> Self {
        Self { book }
    }

    pub fn book(&self) -> &OracleBook {
        &self.book
    }
}

impl Backend for OracleBackend {
    fn generate(&self, model: ModelKind, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        request.validate()?;
        request
            .inputs
            .iter()
            .map(|input| {
                self.book
                    .get(model, input)
                    .map(str::to_string)
                    .ok_or_else(|| BackendError::OracleMiss {
                        model,
                        input: input.clone(),
                    })
            })
            .collect()
    }
}
