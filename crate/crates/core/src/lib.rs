//! Event argument extraction as question generation plus question answering.
//!
//! For every event mention and every role of its event type a question is
//! generated from a dynamic template, answered by a seq2seq model, and the
//! answer is mapped back to character spans. The neural models live behind
//! the [`Backend`] trait; everything else here is deterministic.
//!
//! Modules, in pipeline order:
//!
//! - [`ontology`]: template registry and the shipped ACE templates
//! - [`corpus`]: sentence records with triggers and arguments
//! - [`question_gen`] / [`qa_data`]: model inputs and training targets
//! - [`backend`]: HTTP and oracle generators
//! - [`decode`]: answer strings back to spans
//! - [`scoring`]: trigger/argument PRF and ROUGE-1
//! - [`pipeline`]: end-to-end runs with persisted artifacts

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub mod backend;
pub mod corpus;
pub mod decode;
pub mod example;
pub mod ontology;
pub mod pipeline;
pub mod qa_data;
pub mod question_gen;
pub mod scoring;

pub use backend::{
    default_qa_params, default_qg_params, Backend, BackendError, GenerationParams, GenerationRequest,
    HttpBackend, ModelKind, OracleBackend, OracleBook, ParamOverrides,
};
pub use corpus::{load_corpus, ArgumentSpan, CorpusError, EventMention, SentenceRecord, Span};
pub use decode::{align_spans, decode_answer, parse_answer, DecodedArguments, MatchedSpan, DEFAULT_EOS_TOKEN};
pub use example::{ExampleError, ExampleMeta, Seq2SeqExample};
pub use ontology::{load_registry, DynamicTemplate, RegistryError, TemplateCount, TemplateRegistry};
pub use pipeline::{enumerate_tasks, run_pipeline, PipelineConfig, PipelineError, PipelineReport, Task, TaskPlan};
pub use qa_data::{attach_trigger_clause, emit_qa_inference, emit_qa_training, qa_input, serialize_answer};
pub use question_gen::{candidate_questions, emit_qg_example, qg_input, select_gold_question, CandidateQuestion};
pub use scoring::{rouge1, score_arguments, score_triggers, ArgumentUnit, Prf, ScoreReport, TriggerUnit};

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads one JSON value per line, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| JsonlError::Malformed { line: i + 1, source })?;
        out.push(value);
    }
    Ok(out)
}

pub fn load_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_jsonl(BufReader::new(file))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, rows: &[T]) -> std::io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut writer, row)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
