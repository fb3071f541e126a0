//! Inputs shared by the benchmarks.

use qga_core::corpus::fixture_corpus;
use qga_core::pipeline::{enumerate_tasks, AnswerRow};
use qga_core::qa_data::serialize_answer;
use qga_core::scoring::{argument_units, ArgumentUnit};
use qga_core::{SentenceRecord, TemplateRegistry};

/// A sentence of `words` words and candidates taken from it in order, every
/// `stride`-th word.
pub fn alignment_case(words: usize, stride: usize) -> (String, Vec<String>) {
    let tokens: Vec<String> = (0..words).map(|i| format!("w{}", i % 97)).collect();
    let candidates = tokens.iter().step_by(stride.max(1)).cloned().collect();
    (tokens.join(" "), candidates)
}

/// The fixture corpus repeated `copies` times under distinct ids.
pub fn replicated_fixture(copies: usize) -> Vec<SentenceRecord> {
    let base = fixture_corpus();
    (0..copies)
        .flat_map(|c| {
            base.iter().map(move |r| SentenceRecord {
                id: format!("{}#{c}", r.id),
                ..r.clone()
            })
        })
        .collect()
}

/// Gold answers for every task of `corpus`, as a QA model would return them.
pub fn gold_answers(registry: &TemplateRegistry, corpus: &[SentenceRecord]) -> Vec<AnswerRow> {
    enumerate_tasks(registry, corpus)
        .tasks
        .iter()
        .map(|t| {
            let record = &corpus[t.record];
            let mention = &record.mentions[t.mention];
            AnswerRow {
                id: record.id.clone(),
                mention: t.mention,
                role: t.role.clone(),
                raw: format!("{} </s>", serialize_answer(mention.arguments_for(&t.role))),
            }
        })
        .collect()
}

/// Gold arguments with every `k`-th one moved by a character.
pub fn perturbed_predictions(corpus: &[SentenceRecord], k: usize) -> (Vec<ArgumentUnit>, Vec<ArgumentUnit>) {
    let gold = argument_units(corpus);
    let pred = gold
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut a = a.clone();
            if i % k.max(1) == 0 {
                a.start += 1;
            }
            a
        })
        .collect();
    (pred, gold)
}
