//! Exact-match trigger and argument scoring, plus ROUGE-1 for generated questions.
//!
//! | criterion          | a prediction matches a reference when ...      |
//! |--------------------|------------------------------------------------|
//! | trigger identified | record id and offsets are equal                |
//! | trigger classified | ... and the event type is equal                |
//! | Arg-I              | record id, offsets and event type are equal    |
//! | Arg-C              | ... and the role is equal                      |
//!
//! Matching is one-to-one: each reference absorbs at most one prediction. With
//! exact keys this reduces to summing `min(pred, gold)` per key.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;

/// Raw match counts; adding two shards' counts gives the counts of their union.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub pred: usize,
    pub gold: usize,
}

impl Add for Counts {
    type Output = Counts;
    fn add(self, rhs: Counts) -> Counts {
        Counts {
            tp: self.tp + rhs.tp,
            pred: self.pred + rhs.pred,
            gold: self.gold + rhs.gold,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub pred_count: usize,
    pub gold_count: usize,
}

impl Prf {
    pub fn from_counts(tp: usize, pred_count: usize, gold_count: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(tp, pred_count);
        let recall = ratio(tp, gold_count);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            pred_count,
            gold_count,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            pred: self.pred_count,
            gold: self.gold_count,
        }
    }
}

impl From<Counts> for Prf {
    fn from(c: Counts) -> Self {
        Prf::from_counts(c.tp, c.pred, c.gold)
    }
}

/// Size of the multiset intersection of two key sequences.
pub fn multiset_matches<K, P, G>(pred: P, gold: G) -> usize
where
    K: Eq + Hash,
    P: IntoIterator<Item = K>,
    G: IntoIterator<Item = K>,
{
    let mut available: HashMap<K, usize> = HashMap::new();
    for key in gold {
        *available.entry(key).or_default() += 1;
    }
    let mut matched = 0;
    for key in pred {
        if let Some(n) = available.get_mut(&key) {
            if *n > 0 {
                *n -= 1;
                matched += 1;
            }
        }
    }
    matched
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriggerUnit {
    pub id: String,
    pub start: usize,
    pub end: usize,
    pub event_type: String,
}

/// One predicted or reference argument; also the predictions JSONL row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArgumentUnit {
    pub id: String,
    pub event_type: String,
    pub role: String,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub surface: String,
}

pub fn trigger_units(corpus: &[SentenceRecord]) -> Vec<TriggerUnit> {
    corpus
        .iter()
        .flat_map(|r| {
            r.mentions.iter().map(move |m| TriggerUnit {
                id: r.id.clone(),
                start: m.trigger.start,
                end: m.trigger.end,
                event_type: m.event_type.clone(),
            })
        })
        .collect()
}

pub fn argument_units(corpus: &[SentenceRecord]) -> Vec<ArgumentUnit> {
    corpus
        .iter()
        .flat_map(|r| {
            r.mentions.iter().flat_map(move |m| {
                m.arguments.iter().map(move |a| ArgumentUnit {
                    id: r.id.clone(),
                    event_type: m.event_type.clone(),
                    role: a.role.clone(),
                    start: a.start,
                    end: a.end,
                    surface: a.surface.clone(),
                })
            })
        })
        .collect()
}

fn counts_by<'a, T, K, F>(pred: &'a [T], gold: &'a [T], key: F) -> Counts
where
    K: Eq + Hash,
    F: Fn(&'a T) -> K,
{
    Counts {
        tp: multiset_matches(pred.iter().map(&key), gold.iter().map(&key)),
        pred: pred.len(),
        gold: gold.len(),
    }
}

/// Returns `(identification, classification)`.
pub fn score_triggers(pred: &[TriggerUnit], gold: &[TriggerUnit]) -> (Prf, Prf) {
    let id = counts_by(pred, gold, |t| (t.id.as_str(), t.start, t.end));
    let class = counts_by(pred, gold, |t| (t.id.as_str(), t.start, t.end, t.event_type.as_str()));
    (id.into(), class.into())
}

/// Returns `(Arg-I, Arg-C)`.
pub fn score_arguments(pred: &[ArgumentUnit], gold: &[ArgumentUnit]) -> (Prf, Prf) {
    let ident = counts_by(pred, gold, |a| (a.id.as_str(), a.start, a.end, a.event_type.as_str()));
    let class = counts_by(pred, gold, |a| {
        (a.id.as_str(), a.start, a.end, a.event_type.as_str(), a.role.as_str())
    });
    (ident.into(), class.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub trigger_id: Prf,
    pub trigger_c: Prf,
    pub arg_i: Prf,
    pub arg_c: Prf,
}

impl ScoreReport {
    pub fn compute(
        pred_triggers: &[TriggerUnit],
        gold_triggers: &[TriggerUnit],
        pred_arguments: &[ArgumentUnit],
        gold_arguments: &[ArgumentUnit],
    ) -> Self {
        let (trigger_id, trigger_c) = score_triggers(pred_triggers, gold_triggers);
        let (arg_i, arg_c) = score_arguments(pred_arguments, gold_arguments);
        Self {
            trigger_id,
            trigger_c,
            arg_i,
            arg_c,
        }
    }

    pub fn rows(&self) -> [(&'static str, &Prf); 4] {
        [
            ("Trigger-I", &self.trigger_id),
            ("Trigger-C", &self.trigger_c),
            ("Arg-I", &self.arg_i),
            ("Arg-C", &self.arg_c),
        ]
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>7} {:>7} {:>7} {:>6} {:>6} {:>6}",
            "metric", "P", "R", "F1", "tp", "pred", "gold"
        )?;
        for (name, prf) in self.rows() {
            writeln!(
                f,
                "{:<10} {:>7.2} {:>7.2} {:>7.2} {:>6} {:>6} {:>6}",
                name,
                prf.precision * 100.0,
                prf.recall * 100.0,
                prf.f1 * 100.0,
                prf.tp,
                prf.pred_count,
                prf.gold_count
            )?;
        }
        Ok(())
    }
}

fn unigram_counts(text: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for token in text.split_whitespace() {
        *counts.entry(token.to_lowercase()).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-1 F-measure over lowercased whitespace tokens with clipped counts.
pub fn rouge1(candidate: &str, reference: &str) -> f64 {
    let cand = unigram_counts(candidate);
    let refr = unigram_counts(reference);
    let cand_len: usize = cand.values().sum();
    let ref_len: usize = refr.values().sum();
    if cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let overlap: usize = cand
        .iter()
        .map(|(tok, n)| (*n).min(refr.get(tok).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(overlap, cand_len, ref_len).f1
}
