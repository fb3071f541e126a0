//! QA example construction.
//!
//! QA inputs read `question: <question> in * <trigger> * event? context: <raw sentence>`.
//! The answer is every argument of the role, in reading order, joined by `"; "`;
//! a role without arguments has an empty answer. Training uses every
//! applicable candidate question as a separate example.

use crate::corpus::{ArgumentSpan, EventMention, SentenceRecord};
use crate::example::{ExampleError, ExampleMeta, Seq2SeqExample};
use crate::ontology::TemplateRegistry;
use crate::question_gen::{candidate_questions, mention_at};

pub const ANSWER_SEPARATOR: &str = "; ";

const CLAUSE_OPEN: &str = " in * ";
const CLAUSE_CLOSE: &str = " * event?";

/// Replaces the terminal `?` with `" in * <trigger> * event?"`.
pub fn attach_trigger_clause(question: &str, trigger_surface: &str) -> Result<String, ExampleError> {
    let Some(stem) = question.strip_suffix('?') else {
        return Err(ExampleError::MalformedQuestion(question.to_string()));
    };
    if has_trigger_clause(question) {
        return Err(ExampleError::TriggerClauseAttached(question.to_string()));
    }
    Ok(format!("{stem}{CLAUSE_OPEN}{trigger_surface}{CLAUSE_CLOSE}"))
}

/// True if `question` already ends in a trigger clause.
pub fn has_trigger_clause(question: &str) -> bool {
    question
        .strip_suffix(CLAUSE_CLOSE)
        .is_some_and(|rest| rest.contains(CLAUSE_OPEN))
}

/// Joins argument surfaces with `"; "`. Callers pass arguments sorted by start.
pub fn serialize_answer<'a, I>(arguments: I) -> String
where
    I: IntoIterator<Item = &'a ArgumentSpan>,
{
    let surfaces: Vec<&str> = arguments.into_iter().map(|a| a.surface.as_str()).collect();
    surfaces.join(ANSWER_SEPARATOR)
}

/// Full QA input. The trigger inside the clause is lowercased; the context is
/// the raw sentence.
pub fn qa_input(question: &str, trigger_surface: &str, text: &str) -> Result<String, ExampleError> {
    Ok(format!(
        "question: {} context: {}",
        attach_trigger_clause(question, &trigger_surface.to_lowercase())?,
        text
    ))
}

fn meta(mention: &EventMention, index: usize) -> ExampleMeta {
    ExampleMeta {
        event_type: mention.event_type.clone(),
        trigger: mention.trigger,
        mention: index,
    }
}

/// One training example per applicable candidate question, all sharing the gold answer.
pub fn emit_qa_training(
    registry: &TemplateRegistry,
    record: &SentenceRecord,
    mention_index: usize,
    role: &str,
) -> Result<Vec<Seq2SeqExample>, ExampleError> {
    let mention = mention_at(record, mention_index)?;
    let answer = serialize_answer(mention.arguments_for(role));
    candidate_questions(registry, mention, role)?
        .into_iter()
        .map(|candidate| {
            Ok(Seq2SeqExample {
                id: record.id.clone(),
                role: role.to_string(),
                input: qa_input(&candidate.text, &mention.trigger_surface, &record.text)?,
                output: Some(answer.clone()),
                meta: meta(mention, mention_index),
            })
        })
        .collect()
}

/// Inference example for a generated question; the output is left unset.
pub fn emit_qa_inference(
    question: &str,
    record: &SentenceRecord,
    mention_index: usize,
    role: &str,
) -> Result<Seq2SeqExample, ExampleError> {
    let mention = mention_at(record, mention_index)?;
    Ok(Seq2SeqExample {
        id: record.id.clone(),
        role: role.to_string(),
        input: qa_input(question, &mention.trigger_surface, &record.text)?,
        output: None,
        meta: meta(mention, mention_index),
    })
}
